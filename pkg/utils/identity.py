# utils/identity.py
"""
Identity and seed utilities for ThermalSR.

Purpose:
---------
Stable identifiers for runs, sequences and files, and seed derivation so
every random draw is a pure function of (base seed, identifiers).

Functions:
----------
- generate_run_id()          : returns UUIDv4 for each run
- sequence_id(subject, seq)  : canonical sequence directory name
- derive_seed(base, *parts)  : 31-bit seed from SHA-256 of the parts
- file_digest(path)          : SHA-256 of a file (checkpoint fingerprints)
"""

import hashlib
import uuid
from pathlib import Path
from typing import Union

SEED_BITS = 31

# ---------------------------------------------------------------------
# Identifiers
# ---------------------------------------------------------------------

def generate_run_id() -> str:
    """Generate a unique id for each training/evaluation run."""
    return str(uuid.uuid4())


def sequence_id(subject: int, sequence: int) -> str:
    """Directory name of a sequence, e.g. ``s003_q0042``."""
    return f"s{subject:03d}_q{sequence:04d}"

# ---------------------------------------------------------------------
# Hash-derived values
# ---------------------------------------------------------------------

def derive_seed(base: int, *parts: Union[str, int]) -> int:
    """
    Deterministic seed from a base seed and identifiers.
    Independent of PYTHONHASHSEED and platform.
    """
    key = "/".join([str(int(base))] + [str(p) for p in parts])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") % (1 << SEED_BITS)


def file_digest(path: Union[str, Path]) -> str:
    """SHA-256 hex digest of a file's bytes."""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()

# ---------------------------------------------------------------------
# __all__ (explicit exports)
# ---------------------------------------------------------------------

__all__ = [
    "generate_run_id",
    "sequence_id",
    "derive_seed",
    "file_digest",
]
