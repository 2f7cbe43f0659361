# core/trainer.py
"""
Training & Evaluation Loops
---------------------------
One epoch = a seeded shuffle of the training sequences cut into batches.
Each batch shares one drawn sequence length; every sample gets its own crop
offset and degradation seed. The loss is the mean over time-steps of the
per-step MAE, backpropagated through the whole unroll, followed by one ADAM
step per batch.

All randomness of epoch ``e`` comes from ``default_rng([seed, e])`` and is
drawn on the calling thread, so prefetching and resuming never change results.
"""

import logging
import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from typing import Dict, Iterator, List, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from core.autodiff import ComputationTape, Tensor, backward, mean_abs_error, mean_of
from core.degradation import MAX_SEQUENCE_LENGTH, DegradationParams, make_lr_sequence, random_crop_sequence
from core.dataset import HrSequence
from core.errors import ConfigError, NonFiniteError, TrainingDivergedError
from core.metrics import MetricItem, MetricReport, bicubic_resize, psnr, ssim
from core.network import Parameters, unroll
from core.optimizer import OptimizerState, adam_step, lr_at_epoch
from utils.identity import derive_seed

logger = logging.getLogger("core.trainer")

SEED_RANGE = 1 << 31


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    base_lr: float = 1e-4
    lr_decay_factor: float = 0.5
    lr_decay_period: int = 25
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 8
    min_seq_len: int = 1
    max_seq_len: int = 10
    seed: int = 0
    crop_size: int = 128
    prefetch: int = 0
    checkpoint_every: int = 0

    def __post_init__(self):
        bad = []
        if not 0.0 < self.lr_decay_factor <= 1.0:
            bad.append("lr_decay_factor")
        if not 1 <= self.min_seq_len <= self.max_seq_len <= MAX_SEQUENCE_LENGTH:
            bad += ["min_seq_len", "max_seq_len"]
        for name in ("base_lr", "epsilon", "epochs", "lr_decay_period", "batch_size", "crop_size"):
            if getattr(self, name) <= 0:
                bad.append(name)
        for name in ("weight_decay", "prefetch", "checkpoint_every"):
            if getattr(self, name) < 0:
                bad.append(name)
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            bad += ["beta1", "beta2"]
        if bad:
            raise ConfigError("Invalid training config", bad)


@dataclass
class TrainLogRow:
    epoch: int
    train_loss: float
    val_loss: float
    val_psnr_sr: float
    val_psnr_bicubic: float
    lr: float
    wall_time_s: float

    @classmethod
    def columns(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    lr: float
    batches: int
    samples: int


@dataclass(frozen=True)
class BatchPlan:
    """Everything random about one batch, fixed before any work is done."""

    sequence_ids: Tuple[str, ...]
    length: int
    crop_seeds: Tuple[int, ...]
    degradation_seeds: Tuple[int, ...]


@dataclass
class Batch:
    plan: BatchPlan
    lr_steps: List[Tensor]  # per time-step [B, 1, h, w]
    hr_steps: List[Tensor]  # per time-step [B, 1, H, W]


# -----------------------------------------------------------
# Batch planning & construction
# -----------------------------------------------------------
def draw_sequence_length(rng: np.random.Generator, config: TrainConfig) -> int:
    """Uniform draw in [min_seq_len, max_seq_len]."""
    return int(rng.integers(config.min_seq_len, config.max_seq_len + 1))


def plan_epoch(dataset: Sequence[HrSequence], config: TrainConfig, epoch: int) -> List[BatchPlan]:
    rng = np.random.default_rng([config.seed, epoch])
    order = rng.permutation(len(dataset))
    plans: List[BatchPlan] = []
    for start in range(0, len(order), config.batch_size):
        members = [dataset[i] for i in order[start:start + config.batch_size]]
        length = min(draw_sequence_length(rng, config), min(len(s) for s in members))
        seeds = rng.integers(0, SEED_RANGE, size=(len(members), 2))
        plans.append(BatchPlan(
            sequence_ids=tuple(s.sequence_id for s in members),
            length=length,
            crop_seeds=tuple(int(x) for x in seeds[:, 0]),
            degradation_seeds=tuple(int(x) for x in seeds[:, 1]),
        ))
    return plans


def build_batch(plan: BatchPlan, sequences: Dict[str, HrSequence], degradation: DegradationParams,
                crop_size: int) -> Batch:
    lr_parts, hr_parts = [], []
    for seq_id, crop_seed, deg_seed in zip(plan.sequence_ids, plan.crop_seeds, plan.degradation_seeds):
        frames = sequences[seq_id].frame_tensors(plan.length)
        cropped = random_crop_sequence(frames, crop_size, crop_seed)
        sample = make_lr_sequence(cropped, degradation.with_seed(deg_seed))
        lr_parts.append([f.data for f in sample.lr_frames])
        hr_parts.append([f.data for f in sample.hr_frames])
    lr_steps = [Tensor(np.concatenate([p[t] for p in lr_parts], axis=0)) for t in range(plan.length)]
    hr_steps = [Tensor(np.concatenate([p[t] for p in hr_parts], axis=0)) for t in range(plan.length)]
    return Batch(plan, lr_steps, hr_steps)


def iter_batches(plans: Sequence[BatchPlan], sequences: Dict[str, HrSequence],
                 degradation: DegradationParams, crop_size: int, prefetch: int = 0) -> Iterator[Batch]:
    """Yield batches in plan order, building up to ``prefetch`` ahead on a worker thread."""
    if prefetch <= 0:
        for plan in plans:
            yield build_batch(plan, sequences, degradation, crop_size)
        return
    with ThreadPoolExecutor(max_workers=1, thread_name_prefix="prefetch") as pool:
        pending = deque()
        for plan in plans:
            pending.append(pool.submit(build_batch, plan, sequences, degradation, crop_size))
            if len(pending) > prefetch:
                yield pending.popleft().result()
        while pending:
            yield pending.popleft().result()


# -----------------------------------------------------------
# Training
# -----------------------------------------------------------
def sequence_loss(params: Parameters, lr_steps: Sequence[Tensor], hr_steps: Sequence[Tensor]) -> Tensor:
    """Mean over time-steps of the per-step MAE."""
    outputs = unroll(params, lr_steps)
    return mean_of([mean_abs_error(sr, hr) for sr, hr in zip(outputs, hr_steps)])


def train_step(params: Parameters, opt_state: OptimizerState, batch: Batch, lr: float,
               config: TrainConfig, epoch: int) -> float:
    try:
        with ComputationTape() as tape:
            loss = sequence_loss(params, batch.lr_steps, batch.hr_steps)
    except NonFiniteError as e:
        raise TrainingDivergedError(batch.plan.sequence_ids, opt_state.step + 1, epoch) from e
    value = loss.item()
    if not math.isfinite(value):
        raise TrainingDivergedError(batch.plan.sequence_ids, opt_state.step + 1, epoch)
    grads = params.gradients(backward(tape, loss))
    adam_step(params, grads, opt_state, lr, config)
    return value


def train_epoch(params: Parameters, opt_state: OptimizerState, dataset: Sequence[HrSequence],
                config: TrainConfig, epoch: int, degradation: DegradationParams,
                progress: bool = False) -> EpochStats:
    """
    Run one epoch in place on ``params`` and ``opt_state``.

    Args:
        params: Network parameters (updated)
        opt_state: ADAM state (updated)
        dataset: Training sequences
        config: Training hyperparameters
        epoch: Zero-based epoch index (selects lr and the epoch RNG)
        degradation: Blur/noise settings; seeds are drawn per sample
        progress: Show a tqdm bar

    Returns:
        EpochStats with the sample-weighted mean training loss
    """
    if not dataset:
        raise ValueError("train_epoch needs a non-empty dataset")
    lr = lr_at_epoch(epoch, config)
    plans = plan_epoch(dataset, config, epoch)
    by_id = {s.sequence_id: s for s in dataset}

    total, samples = 0.0, 0
    batches = iter_batches(plans, by_id, degradation, config.crop_size, config.prefetch)
    for batch in tqdm(batches, total=len(plans), desc=f"epoch {epoch}", disable=not progress, leave=False):
        value = train_step(params, opt_state, batch, lr, config, epoch)
        n = len(batch.plan.sequence_ids)
        total += value * n
        samples += n
        logger.debug(f"epoch {epoch} step {opt_state.step}: loss {value:.6f} "
                     f"(len {batch.plan.length}, {n} samples)")
    return EpochStats(epoch=epoch, train_loss=total / samples, lr=lr, batches=len(plans), samples=samples)


# -----------------------------------------------------------
# Evaluation
# -----------------------------------------------------------
@dataclass
class EvaluationResult:
    sr: MetricReport
    bicubic: MetricReport
    val_loss: float
    per_step: List[dict]

    def items(self) -> List[dict]:
        rows = self.sr.to_frame().to_dict("records")
        return rows + self.bicubic.to_frame().to_dict("records")


def _clip01(x: Tensor) -> np.ndarray:
    return np.clip(x.data[0, 0].astype(np.float64), 0.0, 1.0)


def evaluate(params: Parameters, dataset: Sequence[HrSequence], degradation: DegradationParams,
             progress: bool = False) -> EvaluationResult:
    """
    Full-length unroll per sequence, scored on the final frame.

    Each sequence is degraded with a seed derived from (degradation.seed,
    sequence id), so the validation inputs never change between epochs.
    Outputs are clipped to [0, 1] before PSNR/SSIM; the loss uses the raw
    outputs, as in training.
    """
    if not dataset:
        raise ValueError("evaluate needs a non-empty dataset")
    scale = params.config.scale
    sr_items, bic_items, losses = [], [], []
    step_sr: Dict[int, List[float]] = {}
    step_bic: Dict[int, List[float]] = {}

    for seq in tqdm(dataset, desc="evaluate", disable=not progress, leave=False):
        params_for_seq = degradation.with_seed(derive_seed(degradation.seed, seq.sequence_id))
        sample = make_lr_sequence(seq.frame_tensors(), params_for_seq)
        outputs = unroll(params, sample.lr_frames)
        losses.append(mean_of([mean_abs_error(sr, hr) for sr, hr in zip(outputs, sample.hr_frames)]).item())

        for t, (sr, lr, hr) in enumerate(zip(outputs, sample.lr_frames, sample.hr_frames)):
            truth = hr.data[0, 0]
            step_sr.setdefault(t, []).append(psnr(_clip01(sr), truth))
            step_bic.setdefault(t, []).append(psnr(_clip01(bicubic_resize(lr, scale, "up")), truth))

        truth = sample.hr_frames[-1].data[0, 0]
        sr_final = _clip01(outputs[-1])
        bic_final = _clip01(bicubic_resize(sample.lr_frames[-1], scale, "up"))
        sr_items.append(MetricItem(seq.sequence_id, psnr(sr_final, truth), ssim(sr_final, truth)))
        bic_items.append(MetricItem(seq.sequence_id, psnr(bic_final, truth), ssim(bic_final, truth)))

    per_step = [
        {"step": t, "psnr_sr": float(np.mean(step_sr[t])), "psnr_bicubic": float(np.mean(step_bic[t])),
         "sequences": len(step_sr[t])}
        for t in sorted(step_sr)
    ]
    return EvaluationResult(
        sr=MetricReport.from_items("SR", sr_items),
        bicubic=MetricReport.from_items("Bicubic", bic_items),
        val_loss=float(np.mean(losses)),
        per_step=per_step,
    )

