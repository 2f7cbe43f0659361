# core/autodiff/gradcheck.py
"""
Finite-Difference Gradient Checker
----------------------------------
Compares tape gradients against central differences, one element at a time.
Intended for 64-bit tensors and small shapes; large parameters can be
spot-checked on a seeded sample of elements.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from core.autodiff.tensor import ComputationTape, Tensor, backward
from core.errors import NonDeterminismError, ShapeError

logger = logging.getLogger("core.autodiff.gradcheck")

KINK_RATIO = 1e-2
KINK_REFINEMENTS = 2


@dataclass
class GradCheckReport:
    """Per-parameter relative errors and the parameters over tolerance."""

    tolerance: float
    errors: Dict[str, float] = field(default_factory=dict)
    flagged: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.flagged

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-10) -> float:
    """||a - n|| / max(||a|| + ||n||, floor); zero when both gradients vanish."""
    num = float(np.linalg.norm((analytic - numeric).ravel()))
    den = float(np.linalg.norm(analytic.ravel()) + np.linalg.norm(numeric.ravel()))
    return num / max(den, floor)


def _evaluate(f: Callable[[], Tensor]) -> np.ndarray:
    out = f()
    if out.size != 1:
        raise ShapeError("grad_check needs a scalar-valued computation", out.shape)
    return np.array(out.data, dtype=np.float64).reshape(())


def _pick_indices(size: int, sample: Optional[int], rng: np.random.Generator) -> np.ndarray:
    if sample is None or sample >= size:
        return np.arange(size)
    return np.sort(rng.choice(size, size=sample, replace=False))


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], step: float = 1e-5,
               tolerance: float = 1e-4, sample: Optional[int] = None, seed: int = 0) -> GradCheckReport:
    """
    Check tape gradients of ``f`` against central finite differences.

    When the forward and backward one-sided slopes disagree the difference has
    straddled a kink (PReLU or |x| at zero); the step is shrunk tenfold, at
    most ``KINK_REFINEMENTS`` times.

    Args:
        f: Zero-argument callable building a scalar from ``params``
        params: Leaf tensors (``requires_grad=True``) whose data ``f`` reads
        step: Finite-difference step
        tolerance: Maximum accepted relative error per parameter
        sample: Check at most this many elements per parameter (seeded); None checks all
        seed: Seed for element sampling

    Returns:
        GradCheckReport with one error per parameter (keyed by name or index)
    """
    first = _evaluate(f)
    second = _evaluate(f)
    if not np.array_equal(first, second):
        raise NonDeterminismError(f"Forward runs differ: {first!r} != {second!r}")
    baseline = float(first)

    with ComputationTape() as tape:
        loss = f()
    grads = backward(tape, loss)

    rng = np.random.default_rng(seed)
    report = GradCheckReport(tolerance=tolerance)
    for index, param in enumerate(params):
        key = param.name or f"param{index}"
        analytic = grads.get(id(param))
        analytic = np.zeros_like(param.data, dtype=np.float64) if analytic is None else analytic.astype(np.float64)

        if not param.data.flags.c_contiguous or not param.data.flags.writeable:
            param.data = np.array(param.data, order="C")
        flat = param.data.reshape(-1)
        picked = _pick_indices(flat.size, sample, rng)
        numeric = np.zeros(picked.size, dtype=np.float64)
        for j, i in enumerate(picked):
            original = flat[i]
            h = step
            for attempt in range(KINK_REFINEMENTS + 1):
                flat[i] = original + h
                plus = float(_evaluate(f))
                flat[i] = original - h
                minus = float(_evaluate(f))
                flat[i] = original
                forward_slope = (plus - baseline) / h
                backward_slope = (baseline - minus) / h
                smooth = abs(forward_slope - backward_slope) <= KINK_RATIO * (
                    abs(forward_slope) + abs(backward_slope)) + 1e-12
                if smooth or attempt == KINK_REFINEMENTS:
                    break
                h /= 10.0
            numeric[j] = (plus - minus) / (2.0 * h)

        err = relative_error(analytic.reshape(-1)[picked], numeric)
        report.errors[key] = err
        if err > tolerance:
            report.flagged.append(key)
            logger.warning(f"Gradient check failed for {key}: relative error {err:.3e}")

    logger.debug(f"Gradient check max relative error {report.max_error:.3e}")
    return report
