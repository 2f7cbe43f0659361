# core/dataset.py
"""
Sequence Corpus on Disk
-----------------------
Layout:

    <root>/index.txt                 one sequence directory per line
    <root>/<seq>/frame_000.pgm ...   binary PGM frames, contiguous from 000
    <root>/lr_x<scale>/...           LR mirror with the same layout

Sequence directories produced here are named ``s<subject>_q<sequence>``;
other names are accepted and treated as their own subject.
"""

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from core.autodiff import Tensor
from core.degradation import MAX_SEQUENCE_LENGTH, DegradationParams, make_lr_sequence
from core.errors import DatasetValidationError, PgmError
from utils.identity import derive_seed
from utils.pgm import from_unit, read_pgm, to_unit, write_pgm

logger = logging.getLogger("core.dataset")

INDEX_FILE = "index.txt"
FRAME_PATTERN = re.compile(r"^frame_(\d{3,})\.pgm$")
SUBJECT_PATTERN = re.compile(r"^s(\d+)_q(\d+)$")


def frame_name(index: int) -> str:
    return f"frame_{index:03d}.pgm"


@dataclass
class HrSequence:
    """One HR sequence in memory: frames [T, H, W] in [0, 1]."""

    sequence_id: str
    subject: int
    frames: np.ndarray

    def __len__(self) -> int:
        return int(self.frames.shape[0])

    def frame_tensors(self, length: Optional[int] = None) -> List[Tensor]:
        """First ``length`` frames as [1, 1, H, W] tensors."""
        count = len(self) if length is None else min(length, len(self))
        return [Tensor(self.frames[t][None, None]) for t in range(count)]


@dataclass
class SequenceEntry:
    sequence_id: str
    subject: int
    path: Path
    n_frames: int
    width: int
    height: int
    maxval: int


@dataclass
class DatasetIndex:
    """Validated corpus with a seeded train/validation split."""

    root: Path
    entries: Dict[str, SequenceEntry]
    train_ids: List[str] = field(default_factory=list)
    val_ids: List[str] = field(default_factory=list)

    @property
    def n_frames(self) -> int:
        return sum(e.n_frames for e in self.entries.values())

    def load(self, ids: Sequence[str]) -> List[HrSequence]:
        return [load_sequence(self.entries[i]) for i in ids]

    def summary(self) -> dict:
        return {
            "root": str(self.root),
            "sequences": len(self.entries),
            "frames": self.n_frames,
            "train": len(self.train_ids),
            "validation": len(self.val_ids),
        }


def subject_of(name: str, fallback: int) -> int:
    match = SUBJECT_PATTERN.match(name)
    return int(match.group(1)) if match else fallback


# -----------------------------------------------------------
# Writing
# -----------------------------------------------------------
def write_sequence(directory: Union[str, Path], frames: np.ndarray, maxval: int = 65535) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for t, frame in enumerate(frames):
        write_pgm(from_unit(frame, maxval), directory / frame_name(t))
    return directory


def write_corpus(root: Union[str, Path], sequences: Sequence[HrSequence], maxval: int = 65535) -> Path:
    """Write sequences plus index.txt; returns the root."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for seq in sequences:
        write_sequence(root / seq.sequence_id, seq.frames, maxval)
    (root / INDEX_FILE).write_text("".join(f"{s.sequence_id}\n" for s in sequences), encoding="utf-8")
    logger.info(f"Wrote {len(sequences)} sequences to {root}")
    return root


# -----------------------------------------------------------
# Ingestion & validation
# -----------------------------------------------------------
def _validate_sequence(directory: Path) -> Tuple[Optional[tuple], List[str]]:
    issues: List[str] = []
    if not directory.is_dir():
        return None, ["directory missing"]
    numbers = sorted(int(m.group(1)) for m in (FRAME_PATTERN.match(p.name) for p in directory.iterdir()) if m)
    if not numbers:
        return None, ["empty sequence"]
    missing = sorted(set(range(numbers[-1] + 1)) - set(numbers))
    if missing:
        issues.append("missing frames " + ", ".join(frame_name(i) for i in missing))
    if len(numbers) > MAX_SEQUENCE_LENGTH:
        issues.append(f"{len(numbers)} frames, at most {MAX_SEQUENCE_LENGTH} allowed")

    geometry = None
    for n in numbers:
        try:
            image = read_pgm(directory / frame_name(n))
        except PgmError as e:
            issues.append(f"{frame_name(n)}: {e}")
            continue
        current = (image.width, image.height, image.maxval)
        if geometry is None:
            geometry = current
        elif current != geometry:
            issues.append(f"{frame_name(n)}: {current[0]}x{current[1]} maxval {current[2]} "
                          f"differs from {geometry[0]}x{geometry[1]} maxval {geometry[2]}")
    return (len(numbers),) + geometry if geometry else None, issues


def split_ids(entries: Dict[str, SequenceEntry], train_ratio: float, seed: int,
              by: str = "sequence") -> Tuple[List[str], List[str]]:
    """
    Seeded train/validation split.

    ``by="sequence"`` shuffles sequence ids; ``by="subject"`` shuffles
    subjects so no subject appears on both sides. The train side gets
    round(n * train_ratio) units, at least one.
    """
    if not 0.0 < train_ratio <= 1.0:
        raise ValueError(f"train_ratio must be in (0, 1], got {train_ratio}")
    rng = np.random.default_rng(seed)
    if by == "sequence":
        ids = sorted(entries)
        order = [ids[i] for i in rng.permutation(len(ids))]
        n_train = max(1, int(round(len(ids) * train_ratio))) if ids else 0
        return sorted(order[:n_train]), sorted(order[n_train:])
    if by == "subject":
        subjects = sorted({e.subject for e in entries.values()})
        order = [subjects[i] for i in rng.permutation(len(subjects))]
        n_train = max(1, int(round(len(subjects) * train_ratio))) if subjects else 0
        train_subjects = set(order[:n_train])
        train = sorted(i for i, e in entries.items() if e.subject in train_subjects)
        val = sorted(i for i, e in entries.items() if e.subject not in train_subjects)
        return train, val
    raise ValueError(f"split must be 'sequence' or 'subject', got {by!r}")


def ingest_dataset(root: Union[str, Path], train_ratio: float = 0.83, seed: int = 0,
                   split_by: str = "sequence") -> DatasetIndex:
    """
    Validate a corpus and split it.

    Raises:
        DatasetValidationError: itemized per-sequence problems
    """
    root = Path(root)
    index_path = root / INDEX_FILE
    if not index_path.exists():
        raise DatasetValidationError({INDEX_FILE: [f"not found under {root}"]})
    names = [line.strip() for line in index_path.read_text(encoding="utf-8").splitlines() if line.strip()]
    if not names:
        raise DatasetValidationError({INDEX_FILE: ["lists no sequences"]})

    problems: Dict[str, List[str]] = {}
    entries: Dict[str, SequenceEntry] = {}
    for position, name in enumerate(names):
        if name in entries:
            problems.setdefault(name, []).append("listed twice")
            continue
        info, issues = _validate_sequence(root / name)
        if issues:
            problems[name] = issues
        if info and not issues:
            n_frames, width, height, maxval = info
            entries[name] = SequenceEntry(name, subject_of(name, position), root / name,
                                          n_frames, width, height, maxval)
    if problems:
        for name, issues in sorted(problems.items()):
            logger.warning(f"Invalid sequence {name}: {'; '.join(issues)}")
        raise DatasetValidationError(problems)

    train_ids, val_ids = split_ids(entries, train_ratio, seed, split_by)
    index = DatasetIndex(root, entries, train_ids, val_ids)
    logger.info(f"Dataset {root}: {len(entries)} sequences, {index.n_frames} frames, "
                f"{len(train_ids)} train / {len(val_ids)} validation")
    return index


def load_sequence(entry: SequenceEntry) -> HrSequence:
    frames = np.stack([to_unit(read_pgm(entry.path / frame_name(t))) for t in range(entry.n_frames)])
    return HrSequence(entry.sequence_id, entry.subject, frames)


def load_frames(directory: Union[str, Path]) -> np.ndarray:
    """All contiguous frames of a directory as [T, H, W] in [0, 1]."""
    directory = Path(directory)
    info, issues = _validate_sequence(directory)
    if issues:
        raise DatasetValidationError({directory.name: issues})
    return np.stack([to_unit(read_pgm(directory / frame_name(t))) for t in range(info[0])])


# -----------------------------------------------------------
# LR mirror
# -----------------------------------------------------------
def lr_mirror_root(root: Union[str, Path], scale: int) -> Path:
    return Path(root) / f"lr_x{scale}"


def write_lr_mirror(index: DatasetIndex, params: DegradationParams) -> Path:
    """
    Degrade every sequence into ``lr_x<scale>/``. Each sequence uses a
    degradation seed derived from (params.seed, sequence id).
    """
    out_root = lr_mirror_root(index.root, params.scale)
    written = []
    for seq_id in sorted(index.entries):
        entry = index.entries[seq_id]
        seq = load_sequence(entry)
        sample = make_lr_sequence(seq.frame_tensors(), params.with_seed(derive_seed(params.seed, seq_id)))
        lr = np.stack([f.data[0, 0] for f in sample.lr_frames])
        write_sequence(out_root / seq_id, lr, entry.maxval)
        written.append(seq_id)
    (out_root / INDEX_FILE).write_text("".join(f"{s}\n" for s in written), encoding="utf-8")
    logger.info(f"Wrote LR mirror x{params.scale} for {len(written)} sequences to {out_root}")
    return out_root


__all__ = [
    "HrSequence",
    "SequenceEntry",
    "DatasetIndex",
    "write_corpus",
    "ingest_dataset",
    "split_ids",
    "load_sequence",
    "load_frames",
    "write_lr_mirror",
]
