# core/synthetic.py
"""
Synthetic Thermal Corpus
------------------------
Stand-in for a private thermal face dataset. Each frame is a cool linear
gradient background plus 3-6 warm anisotropic Gaussian regions. A subject
fixes the region layout; each sequence of that subject jitters the layout,
scales region intensity and drifts all regions at a constant velocity of at
most 2 px/frame to emulate head motion.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from core.dataset import HrSequence
from utils.identity import sequence_id

logger = logging.getLogger("core.synthetic")

MIN_BLOBS, MAX_BLOBS = 3, 6
MAX_SPEED = 2.0  # px/frame


@dataclass(frozen=True)
class Blob:
    cx: float
    cy: float
    sx: float
    sy: float
    angle: float
    amplitude: float


@dataclass(frozen=True)
class SubjectLayout:
    background: float
    gradient: float
    gradient_angle: float
    blobs: tuple


def _subject_layout(seed: int, subject: int, size: int) -> SubjectLayout:
    rng = np.random.default_rng([seed, 0, subject])
    n_blobs = int(rng.integers(MIN_BLOBS, MAX_BLOBS + 1))
    blobs = tuple(
        Blob(
            cx=float(rng.uniform(0.2, 0.8) * size),
            cy=float(rng.uniform(0.2, 0.8) * size),
            sx=float(rng.uniform(0.04, 0.18) * size),
            sy=float(rng.uniform(0.04, 0.18) * size),
            angle=float(rng.uniform(0.0, math.pi)),
            amplitude=float(rng.uniform(0.25, 0.55)),
        )
        for _ in range(n_blobs)
    )
    return SubjectLayout(
        background=float(rng.uniform(0.15, 0.3)),
        gradient=float(rng.uniform(0.05, 0.15)),
        gradient_angle=float(rng.uniform(0.0, 2.0 * math.pi)),
        blobs=blobs,
    )


def render_frame(layout: SubjectLayout, offsets: np.ndarray, gains: np.ndarray, size: int) -> np.ndarray:
    """Render one frame; ``offsets`` is [n_blobs, 2] (dx, dy) in pixels."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    c = (size - 1) / 2.0
    ux, uy = math.cos(layout.gradient_angle), math.sin(layout.gradient_angle)
    ramp = ((xx - c) * ux + (yy - c) * uy) / size
    img = layout.background + layout.gradient * ramp

    for blob, (dx, dy), gain in zip(layout.blobs, offsets, gains):
        x = xx - (blob.cx + dx)
        y = yy - (blob.cy + dy)
        cos_a, sin_a = math.cos(blob.angle), math.sin(blob.angle)
        xr = cos_a * x + sin_a * y
        yr = -sin_a * x + cos_a * y
        img = img + gain * blob.amplitude * np.exp(-0.5 * ((xr / blob.sx) ** 2 + (yr / blob.sy) ** 2))
    return np.clip(img, 0.0, 1.0)


def synth_thermal_corpus(n_sequences: int, frames_per_seq: int, size: int, seed: int,
                         n_subjects: Optional[int] = None) -> List[HrSequence]:
    """
    Deterministic synthetic corpus.

    Args:
        n_sequences: Number of sequences
        frames_per_seq: Frames per sequence
        size: Square frame side in pixels
        seed: Corpus seed
        n_subjects: Distinct layouts; sequences are dealt round-robin.
            Defaults to one subject per sequence.

    Returns:
        HR sequences with frames [T, size, size] float32 in [0, 1]
    """
    if min(n_sequences, frames_per_seq, size) < 1:
        raise ValueError("n_sequences, frames_per_seq and size must be >= 1")
    n_subjects = n_sequences if not n_subjects else min(int(n_subjects), n_sequences)

    layouts = [_subject_layout(seed, s, size) for s in range(n_subjects)]
    sequences: List[HrSequence] = []
    for q in range(n_sequences):
        subject = q % n_subjects
        layout = layouts[subject]
        rng = np.random.default_rng([seed, 1, q])
        n_blobs = len(layout.blobs)
        jitter = rng.normal(0.0, 0.03 * size, size=(n_blobs, 2))
        gains = rng.uniform(0.9, 1.1, size=n_blobs)
        speed = rng.uniform(0.0, MAX_SPEED)
        heading = rng.uniform(0.0, 2.0 * math.pi)
        velocity = np.array([speed * math.cos(heading), speed * math.sin(heading)])

        frames = np.stack([
            render_frame(layout, jitter + t * velocity, gains, size) for t in range(frames_per_seq)
        ]).astype(np.float32)
        sequences.append(HrSequence(sequence_id(subject, q), subject, frames))

    logger.info(f"Synthesized {n_sequences} sequences x {frames_per_seq} frames "
                f"({size}x{size}, {n_subjects} subjects, seed={seed})")
    return sequences
