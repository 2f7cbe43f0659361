# core/degradation.py
"""
Degradation Model
-----------------
Synthesizes LR inputs from HR frames:

    gaussian_blur -> downsample (box mean) -> add_noise (clamped to [0, 1])

Every operation is pure and seed-deterministic, so samples can be prepared
on any thread as long as each carries its own seed.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Sequence, Tuple, Union

import numpy as np
from scipy.ndimage import correlate1d

from core.autodiff import Tensor
from core.errors import ConfigError, GeometryError, ShapeError

logger = logging.getLogger("core.degradation")

ImageLike = Union[Tensor, np.ndarray]


@dataclass(frozen=True)
class DegradationParams:
    scale: int = 4
    blur_sigma: float = 1.0
    noise_sigma: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.scale not in (2, 4):
            raise ConfigError("scale must be 2 or 4", ["scale"])
        bad = [name for name in ("blur_sigma", "noise_sigma") if getattr(self, name) < 0]
        if bad:
            raise ConfigError("sigmas must be >= 0", bad)

    def with_seed(self, seed: int) -> "DegradationParams":
        return replace(self, seed=int(seed))


MAX_SEQUENCE_LENGTH = 10


@dataclass
class SequenceSample:
    """HR frames with their degraded LR counterparts."""

    hr_frames: List[Tensor]
    lr_frames: List[Tensor]
    params: DegradationParams = field(default_factory=DegradationParams)

    def __post_init__(self):
        if not self.hr_frames or len(self.hr_frames) != len(self.lr_frames):
            raise ShapeError(f"sample needs matching non-empty frame lists "
                             f"({len(self.hr_frames)} HR, {len(self.lr_frames)} LR)")
        if len(self.hr_frames) > MAX_SEQUENCE_LENGTH:
            raise ShapeError(f"sample has {len(self.hr_frames)} frames, at most {MAX_SEQUENCE_LENGTH} allowed")
        s = self.params.scale
        for hr, lr in zip(self.hr_frames, self.lr_frames):
            if lr.shape[-2] * s != hr.shape[-2] or lr.shape[-1] * s != hr.shape[-1]:
                raise ShapeError("LR dims must be HR dims / scale", hr.shape, lr.shape)

    def __len__(self) -> int:
        return len(self.hr_frames)


def _array(image: ImageLike) -> np.ndarray:
    return image.data if isinstance(image, Tensor) else np.asarray(image)


def _float_dtype(x: np.ndarray):
    return x.dtype if x.dtype.kind == "f" else np.float32


# -----------------------------------------------------------
# Operators
# -----------------------------------------------------------
def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian with radius ceil(3 * sigma)."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return np.ones(1, dtype=np.float64)
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(image: ImageLike, sigma: float) -> Tensor:
    """Separable Gaussian blur of the last two axes with reflected edges."""
    x = _array(image)
    if sigma == 0:
        return Tensor(x.copy())
    k = gaussian_kernel(sigma)
    out = correlate1d(x.astype(np.float64), k, axis=-1, mode="reflect")
    out = correlate1d(out, k, axis=-2, mode="reflect")
    return Tensor(out.astype(_float_dtype(x)))


def downsample(image: ImageLike, scale: int) -> Tensor:
    """Box average over each scale x scale block."""
    x = _array(image)
    h, w = x.shape[-2:]
    if scale < 1 or h % scale or w % scale:
        raise GeometryError(f"cannot downsample {h}x{w} by {scale}")
    blocks = x.astype(np.float64).reshape(*x.shape[:-2], h // scale, scale, w // scale, scale)
    return Tensor(blocks.mean(axis=(-3, -1)).astype(_float_dtype(x)))


def noise_field(shape: Tuple[int, ...], sigma: float, seed: int) -> np.ndarray:
    """The i.i.d. N(0, sigma^2) field ``add_noise`` adds before clamping."""
    return np.random.default_rng(seed).standard_normal(shape) * sigma


def add_noise(image: ImageLike, sigma: float, seed: int) -> Tensor:
    """Additive Gaussian noise from a seeded generator, clamped to [0, 1]."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    x = _array(image)
    if sigma == 0:
        return Tensor(x.copy())
    noisy = np.clip(x.astype(np.float64) + noise_field(x.shape, sigma, seed), 0.0, 1.0)
    return Tensor(noisy.astype(_float_dtype(x)))


def crop_offset(shape: Sequence[int], size: int, seed: int) -> Tuple[int, int]:
    h, w = shape[-2:]
    if size > h or size > w or size < 1:
        raise GeometryError(f"crop {size} does not fit frame {h}x{w}")
    rng = np.random.default_rng(seed)
    top = int(rng.integers(0, h - size + 1))
    left = int(rng.integers(0, w - size + 1))
    return top, left


def random_crop_sequence(hr_frames: Sequence[ImageLike], size: int, seed: int) -> List[Tensor]:
    """Crop every frame at one offset drawn per sequence."""
    if not hr_frames:
        return []
    ref = _array(hr_frames[0]).shape
    for frame in hr_frames:
        if _array(frame).shape != ref:
            raise ShapeError("all frames must share one shape", ref, _array(frame).shape)
    top, left = crop_offset(ref, size, seed)
    return [Tensor(_array(f)[..., top:top + size, left:left + size].copy()) for f in hr_frames]


def degrade_frame(frame: ImageLike, params: DegradationParams, noise_seed: int) -> Tensor:
    blurred = gaussian_blur(frame, params.blur_sigma)
    low = downsample(blurred, params.scale)
    return add_noise(low, params.noise_sigma, noise_seed)


def make_lr_sequence(hr_frames: Sequence[ImageLike], params: DegradationParams) -> SequenceSample:
    """Degrade each frame; frame ``i`` uses noise seed ``params.seed + i``."""
    hr = [f if isinstance(f, Tensor) else Tensor(f) for f in hr_frames]
    lr = [degrade_frame(f, params, params.seed + i) for i, f in enumerate(hr)]
    return SequenceSample(hr_frames=hr, lr_frames=lr, params=params)
