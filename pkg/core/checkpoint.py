# core/checkpoint.py
"""
TSR1 Checkpoint Format
----------------------
Little-endian binary container:

    "TSR1" | version u32 | config: len u32 + UTF-8 JSON (sorted keys)
    | tensor count u32
    | per tensor: name len u16 + UTF-8 name | rank u8 | dims u32 x rank | float32 data
    | optional trailer: "TRN1" | epoch u32 | adam step u64 | best val PSNR f64

Optimizer moments travel as ordinary tensors named ``optim.m.<param>`` and
``optim.v.<param>``; they are present exactly when the trailer is.
"""

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from core.autodiff import Tensor
from core.errors import CheckpointError, ConfigError, ConfigMismatchError
from core.network import NetworkConfig, Parameters, parameter_shapes
from core.optimizer import OptimizerState

logger = logging.getLogger("core.checkpoint")

MAGIC = b"TSR1"
TRAILER_MAGIC = b"TRN1"
FORMAT_VERSION = 1
MOMENT_PREFIX = {"m": "optim.m.", "v": "optim.v."}


@dataclass
class TrainingProgress:
    """Resume point: completed epochs, ADAM step and best validation PSNR."""

    epoch: int
    step: int
    best_psnr: float = float("-inf")


@dataclass
class Checkpoint:
    config: NetworkConfig
    params: Parameters
    opt_state: Optional[OptimizerState] = None
    progress: Optional[TrainingProgress] = None


# -----------------------------------------------------------
# Encoding
# -----------------------------------------------------------
def _encode_tensor(name: str, data: np.ndarray) -> bytes:
    raw_name = name.encode("utf-8")
    parts = [struct.pack("<H", len(raw_name)), raw_name, struct.pack("<B", data.ndim)]
    parts.append(struct.pack(f"<{data.ndim}I", *data.shape))
    parts.append(np.ascontiguousarray(data, dtype="<f4").tobytes())
    return b"".join(parts)


def encode_checkpoint(params: Parameters, opt_state: Optional[OptimizerState] = None,
                      progress: Optional[TrainingProgress] = None) -> bytes:
    """Serialize parameters (and optionally optimizer state) to TSR1 bytes."""
    if (opt_state is None) != (progress is None):
        raise CheckpointError("optimizer state and training progress must be saved together")
    tensors: List[Tuple[str, np.ndarray]] = [(name, t.data) for name, t in params.items()]
    if opt_state is not None:
        for key, prefix in MOMENT_PREFIX.items():
            moments = getattr(opt_state, key)
            tensors += [(prefix + name, moments[name]) for name in params]

    config_json = params.config.to_json().encode("utf-8")
    out = [MAGIC, struct.pack("<I", FORMAT_VERSION), struct.pack("<I", len(config_json)), config_json,
           struct.pack("<I", len(tensors))]
    out += [_encode_tensor(name, data) for name, data in tensors]
    if progress is not None:
        out += [TRAILER_MAGIC, struct.pack("<IQd", progress.epoch, progress.step, progress.best_psnr)]
    return b"".join(out)


# -----------------------------------------------------------
# Decoding
# -----------------------------------------------------------
class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def remaining(self) -> int:
        return len(self.buf) - self.pos

    def take(self, n: int) -> bytes:
        if n > self.remaining():
            raise CheckpointError(f"checkpoint truncated at byte {self.pos} (need {n} more)")
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_checkpoint(buf: bytes, expected_config: Optional[NetworkConfig] = None) -> Checkpoint:
    """
    Parse TSR1 bytes.

    Raises:
        CheckpointError: bad magic/version, truncation, unexpected tensors
        ConfigMismatchError: stored config differs from ``expected_config``
    """
    reader = _Reader(buf)
    if reader.take(4) != MAGIC:
        raise CheckpointError("not a TSR1 checkpoint (bad magic)")
    (version,) = reader.unpack("<I")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (config_len,) = reader.unpack("<I")
    try:
        config = NetworkConfig.from_json(reader.take(config_len).decode("utf-8"))
    except (ConfigError, ValueError, TypeError) as e:
        raise CheckpointError(f"invalid config block: {e}") from e

    if expected_config is not None and config != expected_config:
        stored, wanted = config.to_dict(), expected_config.to_dict()
        raise ConfigMismatchError({k: (stored[k], wanted[k]) for k in stored if stored[k] != wanted[k]})

    (count,) = reader.unpack("<I")
    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (rank,) = reader.unpack("<B")
        dims = reader.unpack(f"<{rank}I") if rank else ()
        n = int(np.prod(dims, dtype=np.int64)) if rank else 1
        data = np.frombuffer(reader.take(4 * n), dtype="<f4").astype(np.float32).reshape(dims)
        if name in tensors:
            raise CheckpointError(f"duplicate tensor {name}")
        tensors[name] = data

    progress = None
    if reader.remaining():
        if reader.take(4) != TRAILER_MAGIC:
            raise CheckpointError("unexpected bytes after tensor section")
        epoch, step, best = reader.unpack("<IQd")
        progress = TrainingProgress(epoch=epoch, step=step, best_psnr=best)
        if reader.remaining():
            raise CheckpointError("unexpected bytes after training trailer")

    shapes = parameter_shapes(config)
    params = Parameters(config)
    for name, shape in shapes.items():
        if name not in tensors:
            raise CheckpointError(f"missing tensor {name}")
        if tensors[name].shape != shape:
            raise CheckpointError(f"tensor {name} has shape {tensors[name].shape}, expected {shape}")
        params[name] = Tensor(tensors.pop(name), requires_grad=True, name=name)

    opt_state = None
    if progress is not None:
        opt_state = OptimizerState(step=progress.step)
        for key, prefix in MOMENT_PREFIX.items():
            moments = getattr(opt_state, key)
            for name, shape in shapes.items():
                data = tensors.pop(prefix + name, None)
                if data is None or data.shape != shape:
                    raise CheckpointError(f"missing or malformed optimizer moment {prefix + name}")
                moments[name] = data
    if tensors:
        raise CheckpointError(f"unexpected tensors: {', '.join(sorted(tensors))}")
    return Checkpoint(config=config, params=params, opt_state=opt_state, progress=progress)


# -----------------------------------------------------------
# File API
# -----------------------------------------------------------
def save_checkpoint(params: Parameters, opt_state: Optional[OptimizerState], config: NetworkConfig,
                    epoch: Optional[int], path: Union[str, Path], best_psnr: float = float("-inf")) -> Path:
    """
    Write a checkpoint; the training trailer is included when ``opt_state`` is given.

    Args:
        params: Network parameters
        opt_state: ADAM state, or None for a weights-only file
        config: Must equal ``params.config``
        epoch: Completed epoch count stored in the trailer
        path: Destination file
        best_psnr: Best validation PSNR seen so far
    """
    if config != params.config:
        stored, wanted = params.config.to_dict(), config.to_dict()
        raise ConfigMismatchError({k: (stored[k], wanted[k]) for k in stored if stored[k] != wanted[k]})
    progress = None
    if opt_state is not None:
        progress = TrainingProgress(epoch=int(epoch or 0), step=opt_state.step, best_psnr=best_psnr)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode_checkpoint(params, opt_state, progress))
    tmp.replace(path)
    logger.info(f"Checkpoint written: {path}")
    return path


def load_checkpoint(path: Union[str, Path], expected_config: Optional[NetworkConfig] = None) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    checkpoint = decode_checkpoint(path.read_bytes(), expected_config)
    logger.debug(f"Loaded checkpoint {path} ({len(checkpoint.params)} tensors)")
    return checkpoint
