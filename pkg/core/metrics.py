# core/metrics.py
"""
Image Quality Metrics
---------------------
PSNR, SSIM (11x11 Gaussian window, sigma 1.5), separable bicubic resampling
used as the interpolation baseline, and mean +/- std reporting.
All images are real-valued in [0, 1] with peak 1.0 unless stated otherwise.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from skimage.metrics import structural_similarity

from core.autodiff.tensor import Tensor
from core.errors import GeometryError, ShapeError

logger = logging.getLogger("core.metrics")

PSNR_INF = float("inf")
SSIM_WINDOW = 11  # Gaussian support at sigma 1.5, truncated at 3.5 sigma
SSIM_SIGMA = 1.5
CUBIC_A = -0.5

ImageLike = Union[Tensor, np.ndarray]


def _as_array(x: ImageLike) -> np.ndarray:
    data = x.data if isinstance(x, Tensor) else np.asarray(x)
    return data.astype(np.float64, copy=False)


# -----------------------------------------------------------
# PSNR / SSIM
# -----------------------------------------------------------
def psnr(a: ImageLike, b: ImageLike, peak: float = 1.0) -> float:
    """10 * log10(peak^2 / MSE); returns PSNR_INF for identical images."""
    x, y = _as_array(a), _as_array(b)
    if x.shape != y.shape:
        raise ShapeError("psnr requires identical shapes", x.shape, y.shape)
    if peak <= 0:
        raise ValueError(f"peak must be positive, got {peak}")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return PSNR_INF
    return 10.0 * math.log10(peak * peak / mse)


def ssim_map(a: ImageLike, b: ImageLike, peak: float = 1.0) -> np.ndarray:
    """Local SSIM over the valid region (windows fully inside the image)."""
    x, y = _as_array(a), _as_array(b)
    if x.shape != y.shape:
        raise ShapeError("ssim requires identical shapes", x.shape, y.shape)
    if x.ndim != 2 or x.shape[0] < SSIM_WINDOW or x.shape[1] < SSIM_WINDOW:
        raise GeometryError(f"ssim needs a 2-D image of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {x.shape}")
    _, full = structural_similarity(x, y, data_range=peak, gaussian_weights=True, sigma=SSIM_SIGMA,
                                    use_sample_covariance=False, full=True)
    r = SSIM_WINDOW // 2
    return full[r:-r, r:-r]


def ssim(a: ImageLike, b: ImageLike, peak: float = 1.0) -> float:
    """Mean of the local SSIM map."""
    return float(np.mean(ssim_map(a, b, peak)))


# -----------------------------------------------------------
# Bicubic resampling
# -----------------------------------------------------------
def cubic_kernel(d, a: float = CUBIC_A):
    """Keys cubic convolution kernel w(d)."""
    d = np.abs(np.asarray(d, dtype=np.float64))
    near = (a + 2.0) * d ** 3 - (a + 3.0) * d ** 2 + 1.0
    far = a * d ** 3 - 5.0 * a * d ** 2 + 8.0 * a * d - 4.0 * a
    return np.where(d <= 1.0, near, np.where(d < 2.0, far, 0.0))


def cubic_weights(phase: float, a: float = CUBIC_A) -> np.ndarray:
    """Normalized weights of taps at distances (1 + t, t, 1 - t, 2 - t)."""
    t = float(phase)
    w = cubic_kernel(np.array([1.0 + t, t, 1.0 - t, 2.0 - t]), a)
    return w / w.sum()


def resample_matrix(in_size: int, scale: int, direction: str) -> np.ndarray:
    """
    Dense (out_size, in_size) bicubic resampling matrix with half-pixel
    centering and edge clamp. Downsampling widens the kernel by ``scale``.
    """
    if direction == "up":
        out_size = in_size * scale
        m = np.zeros((out_size, in_size), dtype=np.float64)
        for dst in range(out_size):
            src = (dst + 0.5) / scale - 0.5
            base = math.floor(src)
            weights = cubic_weights(src - base)
            for k, w in enumerate(weights):
                idx = min(max(base - 1 + k, 0), in_size - 1)
                m[dst, idx] += w
        return m

    if direction == "down":
        if in_size % scale:
            raise GeometryError(f"bicubic down: size {in_size} not divisible by {scale}")
        out_size = in_size // scale
        m = np.zeros((out_size, in_size), dtype=np.float64)
        support = 2 * scale
        for dst in range(out_size):
            src = (dst + 0.5) * scale - 0.5
            taps = np.arange(math.floor(src - support) + 1, math.floor(src + support) + 1)
            weights = cubic_kernel((src - taps) / scale)
            weights = weights / weights.sum()
            for tap, w in zip(taps, weights):
                m[dst, min(max(int(tap), 0), in_size - 1)] += w
        return m

    raise ValueError(f"direction must be 'up' or 'down', got {direction!r}")


def bicubic_resize(image: ImageLike, scale: int, direction: str = "up") -> Tensor:
    """Separable bicubic resize of the last two axes by an integer factor."""
    if scale not in (2, 4):
        raise GeometryError(f"bicubic scale must be 2 or 4, got {scale}")
    src = image.data if isinstance(image, Tensor) else np.asarray(image)
    dtype = src.dtype if src.dtype.kind == "f" else np.float32
    x = src.astype(np.float64, copy=False)
    my = resample_matrix(x.shape[-2], scale, direction)
    mx = resample_matrix(x.shape[-1], scale, direction)
    out = np.matmul(np.matmul(my, x), mx.T)
    return Tensor(out.astype(dtype, copy=False))


# -----------------------------------------------------------
# Aggregation & reports
# -----------------------------------------------------------
def aggregate(values: Iterable[float]) -> Tuple[float, float]:
    """Arithmetic mean and population standard deviation."""
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise ValueError("aggregate needs at least one value")
    return float(arr.mean()), float(arr.std(ddof=0))


@dataclass(frozen=True)
class MetricItem:
    sequence_id: str
    psnr: float
    ssim: float


@dataclass
class MetricReport:
    """Per-sequence PSNR/SSIM for one method plus mean +/- std."""

    method: str
    per_item: List[MetricItem] = field(default_factory=list)
    psnr_mean: float = 0.0
    psnr_std: float = 0.0
    ssim_mean: float = 0.0
    ssim_std: float = 0.0

    @classmethod
    def from_items(cls, method: str, items: Sequence[MetricItem]) -> "MetricReport":
        ordered = sorted(items, key=lambda item: item.sequence_id)
        psnr_mean, psnr_std = aggregate(item.psnr for item in ordered)
        ssim_mean, ssim_std = aggregate(item.ssim for item in ordered)
        return cls(method, ordered, psnr_mean, psnr_std, ssim_mean, ssim_std)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [{"method": self.method, "sequence_id": i.sequence_id, "psnr": i.psnr, "ssim": i.ssim}
             for i in self.per_item],
            columns=["method", "sequence_id", "psnr", "ssim"],
        )

    def summary_row(self) -> dict:
        return {
            "method": self.method,
            "psnr_mean": self.psnr_mean,
            "psnr_std": self.psnr_std,
            "ssim_mean": self.ssim_mean,
            "ssim_std": self.ssim_std,
        }

    def summary_text(self) -> str:
        return (f"{self.method:<8} PSNR {self.psnr_mean:.3f} ± {self.psnr_std:.3f}   "
                f"SSIM {self.ssim_mean:.3f} ± {self.ssim_std:.3f}")


def summary_frame(reports: Sequence[MetricReport]) -> pd.DataFrame:
    """Table with one row per method, shaped like the results table."""
    return pd.DataFrame([r.summary_row() for r in reports],
                        columns=["method", "psnr_mean", "psnr_std", "ssim_mean", "ssim_std"])
