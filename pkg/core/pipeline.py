# core/pipeline.py
"""
Main Orchestrator for Training & Evaluation Runs
------------------------------------------------
TrainingPipeline: dataset ingestion -> init or resume -> per epoch
(train, validate, log row, checkpoints) -> run summary.
EvaluationPipeline: checkpoint -> SR and bicubic metric tables.

Outputs under the run directory:

    config.cfg           fully resolved configuration
    train_log.csv        one TrainLogRow per completed epoch
    last.tsr / best.tsr  latest and best-validation-PSNR checkpoints
    epoch_NNN.tsr        periodic checkpoints (checkpoint_every > 0)
    run_summary.json     split sizes, best epoch, final metrics, timestamps
"""

import logging
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

import pandas as pd

from core.checkpoint import load_checkpoint, save_checkpoint
from core.dataset import DatasetIndex, HrSequence, ingest_dataset
from core.errors import CheckpointError
from core.network import init_network
from core.optimizer import OptimizerState
from core.trainer import EvaluationResult, TrainLogRow, evaluate, train_epoch
from core.metrics import summary_frame
from utils.config import RunConfig, dump_config
from utils.identity import file_digest, generate_run_id
from utils.storage import load_csv, save_csv, save_json
from utils.time import Stopwatch, to_iso

logger = logging.getLogger("core.pipeline")

TRAIN_LOG = "train_log.csv"
LAST_CHECKPOINT = "last.tsr"
BEST_CHECKPOINT = "best.tsr"


def _validation_set(index: DatasetIndex, train: Sequence[HrSequence]) -> List[HrSequence]:
    if index.val_ids:
        return index.load(index.val_ids)
    logger.warning("Validation split is empty; validating on the training sequences")
    return list(train)


def write_evaluation(result: EvaluationResult, out_dir: Path) -> dict:
    """Write per-item, summary and per-step CSVs; returns their paths."""
    paths = {
        "items": save_csv(pd.DataFrame(result.items()), out_dir / "eval_items.csv"),
        "summary": save_csv(summary_frame([result.sr, result.bicubic]), out_dir / "eval_summary.csv"),
        "per_step": save_csv(result.per_step, out_dir / "eval_per_step.csv",
                             columns=["step", "psnr_sr", "psnr_bicubic", "sequences"]),
    }
    return {k: str(v) for k, v in paths.items()}


class TrainingPipeline:
    """Production-grade training run orchestrator."""

    def __init__(self, config: RunConfig, progress: bool = False):
        self.config = config
        self.out_dir = Path(config.out)
        self.progress = progress
        self.run_id = generate_run_id()

    def _resume_rows(self, start_epoch: int) -> List[dict]:
        log_path = self.out_dir / TRAIN_LOG
        if not log_path.exists():
            return []
        frame = load_csv(log_path)
        return frame[frame["epoch"] < start_epoch].to_dict("records")

    def run(self, resume: bool = False) -> dict:
        """
        Execute the full training run.

        Args:
            resume: Continue from ``last.tsr`` in the run directory

        Returns:
            Run summary dict (also written to run_summary.json)
        """
        started = to_iso()
        self.out_dir.mkdir(parents=True, exist_ok=True)
        dump_config(self.config, self.out_dir / "config.cfg")

        network_config = self.config.network()
        train_config = self.config.train()
        degradation = self.config.degradation()

        index = ingest_dataset(self.config.data_root, self.config.train_ratio, self.config.seed,
                               self.config.split_by)
        train_set = index.load(index.train_ids)
        val_set = _validation_set(index, train_set)

        if resume:
            checkpoint = load_checkpoint(self.out_dir / LAST_CHECKPOINT, network_config)
            if checkpoint.progress is None:
                raise CheckpointError(f"{LAST_CHECKPOINT} has no training state to resume from")
            params, opt_state = checkpoint.params, checkpoint.opt_state
            start_epoch, best_psnr = checkpoint.progress.epoch, checkpoint.progress.best_psnr
            rows = self._resume_rows(start_epoch)
            logger.info(f"Resuming at epoch {start_epoch} (step {opt_state.step})")
        else:
            params = init_network(network_config, self.config.seed)
            opt_state = OptimizerState.zeros_like(params)
            start_epoch, best_psnr, rows = 0, float("-inf"), []
            logger.info(f"Initialized network with {params.num_elements():,} parameters")

        best_epoch = None
        last_result: Optional[EvaluationResult] = None
        for epoch in range(start_epoch, train_config.epochs):
            timer = Stopwatch()
            stats = train_epoch(params, opt_state, train_set, train_config, epoch, degradation, self.progress)
            result = evaluate(params, val_set, degradation, self.progress)
            row = TrainLogRow(
                epoch=epoch,
                train_loss=stats.train_loss,
                val_loss=result.val_loss,
                val_psnr_sr=result.sr.psnr_mean,
                val_psnr_bicubic=result.bicubic.psnr_mean,
                lr=stats.lr,
                wall_time_s=timer.elapsed,
            )
            rows.append(row.as_dict())
            save_csv(rows, self.out_dir / TRAIN_LOG, columns=TrainLogRow.columns())
            logger.info(f"Epoch {epoch}: loss {row.train_loss:.5f} val_loss {row.val_loss:.5f} "
                        f"PSNR SR {row.val_psnr_sr:.3f} / bicubic {row.val_psnr_bicubic:.3f} "
                        f"lr {row.lr:.3e} ({row.wall_time_s:.1f}s)")

            completed = epoch + 1
            if row.val_psnr_sr > best_psnr:
                best_psnr, best_epoch = row.val_psnr_sr, epoch
                save_checkpoint(params, opt_state, network_config, completed,
                                self.out_dir / BEST_CHECKPOINT, best_psnr)
            if train_config.checkpoint_every and completed % train_config.checkpoint_every == 0:
                save_checkpoint(params, opt_state, network_config, completed,
                                self.out_dir / f"epoch_{completed:03d}.tsr", best_psnr)
            save_checkpoint(params, opt_state, network_config, completed,
                            self.out_dir / LAST_CHECKPOINT, best_psnr)
            last_result = result

        summary = {
            "run_id": self.run_id,
            "started": started,
            "finished": to_iso(),
            "resumed_from_epoch": start_epoch if resume else None,
            "dataset": index.summary(),
            "parameters": params.num_elements(),
            "epochs_completed": max(start_epoch, train_config.epochs),
            "best_epoch": best_epoch,
            "best_val_psnr": best_psnr,
            "optimizer_steps": opt_state.step,
        }
        if last_result is not None:
            summary["final"] = {"sr": last_result.sr.summary_row(), "bicubic": last_result.bicubic.summary_row()}
        last_path = self.out_dir / LAST_CHECKPOINT
        if last_path.exists():
            summary["last_checkpoint_sha256"] = file_digest(last_path)
        save_json(summary, self.out_dir / "run_summary.json")
        logger.info(f"Training finished: best val PSNR {best_psnr:.3f} dB")
        return summary


class EvaluationPipeline:
    """Score a checkpoint on the validation split (or the whole corpus)."""

    def __init__(self, config: RunConfig, progress: bool = False):
        self.config = config
        self.progress = progress

    def run(self, checkpoint_path: Path, out_dir: Path, split: str = "validation") -> EvaluationResult:
        checkpoint = load_checkpoint(checkpoint_path)
        if checkpoint.config.scale != self.config.scale:
            logger.warning(f"Checkpoint scale x{checkpoint.config.scale} overrides configured "
                           f"x{self.config.scale}")
        index = ingest_dataset(self.config.data_root, self.config.train_ratio, self.config.seed,
                               self.config.split_by)
        if split == "all":
            sequences = index.load(sorted(index.entries))
        else:
            sequences = _validation_set(index, index.load(index.train_ids))

        degradation = self.config.degradation()
        if degradation.scale != checkpoint.config.scale:
            degradation = replace(degradation, scale=checkpoint.config.scale)
        result = evaluate(checkpoint.params, sequences, degradation, self.progress)
        paths = write_evaluation(result, Path(out_dir))
        for report in (result.sr, result.bicubic):
            logger.info(report.summary_text())
        save_json({
            "checkpoint": str(checkpoint_path),
            "checkpoint_sha256": file_digest(checkpoint_path),
            "sequences": len(sequences),
            "split": split,
            "sr": result.sr.summary_row(),
            "bicubic": result.bicubic.summary_row(),
            "val_loss": result.val_loss,
            "outputs": paths,
            "finished": to_iso(),
        }, Path(out_dir) / "eval_summary.json")
        return result
