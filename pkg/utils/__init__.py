# utils/__init__.py
"""
Utility module initializer for ThermalSR.
Centralized imports with no circular dependencies; ``utils.config`` and
``utils.pgm`` depend on ``core`` and are imported directly.
"""

from .logger import configure_logging
from .time import Stopwatch, to_iso
from .identity import derive_seed, file_digest, generate_run_id, sequence_id
from .storage import load_csv, save_csv, save_json

__all__ = [
    "configure_logging",
    "Stopwatch",
    "to_iso",
    "derive_seed",
    "file_digest",
    "generate_run_id",
    "sequence_id",
    "load_csv",
    "save_csv",
    "save_json",
]
