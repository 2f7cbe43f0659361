# core/errors.py
"""
Exception hierarchy for ThermalSR.
Engine code raises these; only the CLI maps them to exit codes.
"""

from typing import Dict, Iterable, List, Optional, Sequence


class ThermalSRError(Exception):
    """Base class for every error raised by the engine."""

    exit_code = 1


class ShapeError(ThermalSRError):
    """Operand shapes are incompatible."""

    def __init__(self, message: str, *shapes: Sequence[int]):
        if shapes:
            message = f"{message} (shapes: {', '.join(str(tuple(s)) for s in shapes)})"
        super().__init__(message)
        self.shapes = [tuple(s) for s in shapes]


class GeometryError(ThermalSRError):
    """Spatial geometry is invalid (non-positive or non-divisible dims)."""


class NonFiniteError(ThermalSRError):
    """A tensor or gradient contains NaN or infinity."""

    def __init__(self, message: str, name: Optional[str] = None):
        if name:
            message = f"{message} [{name}]"
        super().__init__(message)
        self.name = name


class NonDeterminismError(ThermalSRError):
    """Two identical forward runs produced different results."""


class ConfigError(ThermalSRError):
    """Configuration is invalid or contains unknown keys."""

    exit_code = 2

    def __init__(self, message: str, keys: Iterable[str] = ()):
        self.keys = list(keys)
        if self.keys:
            message = f"{message}: {', '.join(self.keys)}"
        super().__init__(message)


class ConfigMismatchError(ThermalSRError):
    """Checkpoint network config differs from the expected config."""

    def __init__(self, differences: Dict[str, tuple]):
        self.differences = differences
        detail = ", ".join(f"{k}: checkpoint={a} expected={b}" for k, (a, b) in differences.items())
        super().__init__(f"Network config mismatch ({detail})")


class CheckpointError(ThermalSRError):
    """Checkpoint file is corrupt, truncated or of an unknown version."""


class PgmError(ThermalSRError):
    """Base class for PGM decoding errors."""


class PgmMagicError(PgmError):
    """File does not start with the binary P5 magic."""


class PgmMaxvalError(PgmError):
    """maxval is not 255 or 65535."""


class PgmTruncatedError(PgmError):
    """Header or payload ends early."""


class DatasetValidationError(ThermalSRError):
    """Dataset layout failed validation; `problems` maps sequence id to issues."""

    def __init__(self, problems: Dict[str, List[str]]):
        self.problems = problems
        lines = [f"{seq}: {'; '.join(issues)}" for seq, issues in sorted(problems.items())]
        super().__init__(f"Dataset validation failed for {len(problems)} item(s):\n" + "\n".join(lines))


class TrainingDivergedError(ThermalSRError):
    """Loss became non-finite during training."""

    def __init__(self, sequence_ids: Sequence[str], step: int, epoch: int):
        self.sequence_ids = list(sequence_ids)
        self.step = step
        self.epoch = epoch
        super().__init__(
            f"Non-finite loss at epoch {epoch}, optimizer step {step}, "
            f"sequences {', '.join(self.sequence_ids)}"
        )
