#!/usr/bin/env python3
"""
ThermalSR - Recurrent Thermal Super-Resolution
Command-line entry point: corpus synthesis, degradation, training,
evaluation, inference and complexity reporting.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from core.autodiff import Tensor
from core.checkpoint import load_checkpoint
from core.complexity import render_report, report, save_breakdown
from core.dataset import ingest_dataset, load_frames, write_corpus, write_lr_mirror
from core.errors import ShapeError, ThermalSRError
from core.metrics import bicubic_resize, psnr, ssim
from core.network import unroll
from core.pipeline import EvaluationPipeline, TrainingPipeline
from core.synthetic import synth_thermal_corpus
from utils.config import SECTIONS, RunConfig, load_config, load_env
from utils.logger import configure_logging
from utils.pgm import from_unit, side_by_side, write_pgm

logger = logging.getLogger("ThermalSR")

EXIT_OK, EXIT_DATA, EXIT_USAGE = 0, 1, 2


def _banner(title: str, lines: List[str]):
    print("\n" + "=" * 60)
    print(f" {title}")
    print("=" * 60)
    for line in lines:
        print(f" {line}")
    print("=" * 60 + "\n")


# -----------------------------------------------------------
# Subcommands
# -----------------------------------------------------------
def cmd_make_synthetic(config: RunConfig, args) -> int:
    root = Path(args.data or config.data_root)
    sequences = synth_thermal_corpus(config.synth_sequences, config.synth_frames, config.synth_size,
                                     config.seed, config.synth_subjects or None)
    write_corpus(root, sequences, config.maxval)
    _banner("SYNTHETIC CORPUS", [
        f"Sequences: {len(sequences)} x {config.synth_frames} frames",
        f"Frame size: {config.synth_size}x{config.synth_size} (maxval {config.maxval})",
        f"Written to: {root}",
    ])
    return EXIT_OK


def cmd_degrade(config: RunConfig, args) -> int:
    index = ingest_dataset(args.data or config.data_root, config.train_ratio, config.seed, config.split_by)
    out_root = write_lr_mirror(index, config.degradation())
    _banner("LR MIRROR", [
        f"Sequences: {len(index.entries)}",
        f"Scale: x{config.scale}, blur sigma {config.blur_sigma}, noise sigma {config.noise_sigma}",
        f"Written to: {out_root}",
    ])
    return EXIT_OK


def cmd_train(config: RunConfig, args) -> int:
    summary = TrainingPipeline(config, progress=args.progress).run(resume=args.resume)
    lines = [
        f"Epochs completed: {summary['epochs_completed']}",
        f"Best epoch: {summary['best_epoch']} (val PSNR {summary['best_val_psnr']:.3f} dB)",
        f"Run directory: {config.out}",
    ]
    if "final" in summary:
        lines.insert(1, f"Final val PSNR SR {summary['final']['sr']['psnr_mean']:.3f} / "
                        f"bicubic {summary['final']['bicubic']['psnr_mean']:.3f}")
    _banner("TRAINING SUMMARY", lines)
    return EXIT_OK


def cmd_eval(config: RunConfig, args) -> int:
    checkpoint = Path(config.checkpoint or Path(config.out) / "best.tsr")
    result = EvaluationPipeline(config, progress=args.progress).run(checkpoint, Path(config.out), args.split)
    _banner("EVALUATION SUMMARY", [
        result.sr.summary_text(),
        result.bicubic.summary_text(),
        f"Sequences: {len(result.sr.per_item)}",
        f"Tables: {config.out}/eval_items.csv, eval_summary.csv, eval_per_step.csv",
    ])
    return EXIT_OK


def cmd_infer(config: RunConfig, args) -> int:
    checkpoint = load_checkpoint(config.checkpoint or Path(config.out) / "best.tsr")
    scale = checkpoint.config.scale
    lr = load_frames(args.input)
    outputs = unroll(checkpoint.params, [Tensor(frame[None, None]) for frame in lr])

    out_dir = Path(config.out)
    for t, sr in enumerate(outputs):
        write_pgm(from_unit(sr.data[0, 0], config.maxval), out_dir / f"frame_{t:03d}.pgm")

    final_sr = np.clip(outputs[-1].data[0, 0].astype(np.float64), 0.0, 1.0)
    final_bicubic = np.clip(bicubic_resize(lr[-1], scale, "up").data.astype(np.float64), 0.0, 1.0)
    panels = [final_bicubic, final_sr]
    lines = [f"SR frames: {len(outputs)} x {final_sr.shape[1]}x{final_sr.shape[0]} -> {out_dir}"]
    if args.hr:
        hr = load_frames(args.hr)[-1].astype(np.float64)
        if hr.shape != final_sr.shape:
            raise ShapeError("HR reference does not match SR output", hr.shape, final_sr.shape)
        panels.append(hr)
        lines += [f"SR      PSNR {psnr(final_sr, hr):.3f}  SSIM {ssim(final_sr, hr):.4f}",
                  f"Bicubic PSNR {psnr(final_bicubic, hr):.3f}  SSIM {ssim(final_bicubic, hr):.4f}"]
    write_pgm(side_by_side(panels), out_dir / "comparison.pgm")
    lines.append(f"Comparison: {out_dir / 'comparison.pgm'} (bicubic | SR{' | HR' if args.hr else ''})")
    _banner("INFERENCE", lines)
    return EXIT_OK


def cmd_complexity(config: RunConfig, args) -> int:
    result = report(config.network(), args.height or config.complexity_h, args.width or config.complexity_w)
    print(render_report(result))
    if args.csv:
        save_breakdown(result, args.csv)
        logger.info(f"Complexity breakdown written to {args.csv}")
    return EXIT_OK


COMMANDS = {
    "make-synthetic": cmd_make_synthetic,
    "degrade": cmd_degrade,
    "train": cmd_train,
    "eval": cmd_eval,
    "infer": cmd_infer,
    "complexity": cmd_complexity,
}


# -----------------------------------------------------------
# Main CLI Orchestration
# -----------------------------------------------------------
def _config_keys_help() -> str:
    fields = RunConfig.model_fields
    lines = ["config keys (key = value, see docs/config_guide.md):"]
    for section, keys in SECTIONS.items():
        typed = ", ".join(f"{k} ({fields[k].annotation.__name__})" for k in keys)
        lines.append(f"  [{section}] {typed}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, help="Flat key = value run config (see docs/config_guide.md)")
    common.add_argument("--seed", type=int, help="Seed for every random draw of the run")
    common.add_argument("--scale", type=int, choices=[2, 4], help="Super-resolution factor")
    common.add_argument("--out", type=str, help="Output directory")
    common.add_argument("--checkpoint", type=str, help="Checkpoint file (.tsr)")
    common.add_argument("--verbose", action="store_true", help="Enable detailed logging output")

    parser = argparse.ArgumentParser(prog="thermalsr", description="ThermalSR recurrent thermal super-resolution",
                                     epilog=_config_keys_help(),
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("make-synthetic", parents=[common], help="Write a synthetic thermal corpus")
    p.add_argument("--data", type=str, help="Corpus root (default: data_root)")

    p = sub.add_parser("degrade", parents=[common], help="Write LR mirrors of a corpus")
    p.add_argument("--data", type=str, help="Corpus root (default: data_root)")

    p = sub.add_parser("train", parents=[common], help="Train the recurrent network")
    p.add_argument("--epochs", type=int, help="Total epochs (overrides config)")
    p.add_argument("--data", type=str, help="Corpus root (default: data_root)")
    p.add_argument("--resume", action="store_true", help="Continue from last.tsr in --out")
    p.add_argument("--progress", action="store_true", help="Show progress bars")

    p = sub.add_parser("eval", parents=[common], help="Evaluate a checkpoint against bicubic")
    p.add_argument("--data", type=str, help="Corpus root (default: data_root)")
    p.add_argument("--split", choices=["validation", "all"], default="validation")
    p.add_argument("--progress", action="store_true", help="Show progress bars")

    p = sub.add_parser("infer", parents=[common], help="Super-resolve an LR sequence directory")
    p.add_argument("--input", type=str, required=True, help="Directory of LR frame_NNN.pgm files")
    p.add_argument("--hr", type=str, help="Optional directory of matching HR frames")

    p = sub.add_parser("complexity", parents=[common], help="Print parameter/MAC/FLOP counts")
    p.add_argument("--height", type=int, help="LR input height (default: complexity_h)")
    p.add_argument("--width", type=int, help="LR input width (default: complexity_w)")
    p.add_argument("--csv", type=str, help="Also write the per-layer breakdown as CSV")
    return parser


def resolve_config(args) -> RunConfig:
    overrides = {
        "seed": args.seed,
        "scale": args.scale,
        "out": args.out,
        "checkpoint": args.checkpoint,
        "epochs": getattr(args, "epochs", None),
        "data_root": getattr(args, "data", None),
    }
    return load_config(args.config, overrides)


def main(argv: Optional[List[str]] = None) -> int:
    """Command-line interface for ThermalSR; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK

    load_env()
    configure_logging(args.verbose)
    try:
        config = resolve_config(args)
        logger.info(f"Running {args.command} (seed={config.seed}, scale=x{config.scale})")
        return COMMANDS[args.command](config, args)
    except ThermalSRError as e:
        logger.error(f"{args.command} failed: {e}")
        return e.exit_code
    except Exception as e:
        logger.error(f"{args.command} failed unexpectedly: {e}", exc_info=True)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
