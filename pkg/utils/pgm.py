# utils/pgm.py
"""
Binary PGM (P5) codec.

8-bit (maxval 255) and 16-bit big-endian (maxval 65535) grayscale only.
Canonical files use the header ``P5\\n<w> <h>\\n<maxval>\\n`` with no comments;
``encode_pgm(decode_pgm(b)) == b`` for every canonical file.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from core.errors import PgmError, PgmMagicError, PgmMaxvalError, PgmTruncatedError

MAXVALS = (255, 65535)
_WHITESPACE = b" \t\r\n\x0b\x0c"


@dataclass
class PgmImage:
    width: int
    height: int
    maxval: int
    samples: np.ndarray  # (height, width), uint8 or uint16

    def __post_init__(self):
        if self.maxval not in MAXVALS:
            raise PgmMaxvalError(f"maxval must be 255 or 65535, got {self.maxval}")
        if self.samples.shape != (self.height, self.width):
            raise PgmError(f"samples shape {self.samples.shape} != {(self.height, self.width)}")
        if self.samples.size and int(self.samples.max()) > self.maxval:
            raise PgmError(f"sample exceeds maxval {self.maxval}")


def _next_token(buf: bytes, pos: int) -> Tuple[bytes, int]:
    n = len(buf)
    while pos < n:
        if buf[pos:pos + 1] == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif buf[pos:pos + 1] in _WHITESPACE:
            pos += 1
        else:
            break
    start = pos
    while pos < n and buf[pos:pos + 1] not in _WHITESPACE and buf[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise PgmTruncatedError("PGM header ends early")
    return buf[start:pos], pos


def decode_pgm(buf: bytes) -> PgmImage:
    if buf[:2] != b"P5":
        raise PgmMagicError(f"expected P5 magic, got {buf[:2]!r}")
    pos = 2
    values = []
    for field_name in ("width", "height", "maxval"):
        token, pos = _next_token(buf, pos)
        try:
            values.append(int(token))
        except ValueError:
            raise PgmError(f"invalid {field_name} {token!r}") from None
    width, height, maxval = values
    if width < 1 or height < 1:
        raise PgmError(f"invalid dimensions {width}x{height}")
    if maxval not in MAXVALS:
        raise PgmMaxvalError(f"maxval must be 255 or 65535, got {maxval}")
    if pos >= len(buf):
        raise PgmTruncatedError("missing payload")
    pos += 1  # single whitespace byte ends the header

    dtype = np.dtype(">u2") if maxval == 65535 else np.dtype("u1")
    expected = width * height * dtype.itemsize
    payload = buf[pos:pos + expected]
    if len(payload) < expected:
        raise PgmTruncatedError(f"payload has {len(payload)} bytes, expected {expected}")
    samples = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    return PgmImage(width, height, maxval, samples.astype(np.uint16 if maxval == 65535 else np.uint8))


def encode_pgm(image: PgmImage) -> bytes:
    header = f"P5\n{image.width} {image.height}\n{image.maxval}\n".encode("ascii")
    dtype = ">u2" if image.maxval == 65535 else "u1"
    return header + np.ascontiguousarray(image.samples, dtype=dtype).tobytes()


def read_pgm(path: Union[str, Path]) -> PgmImage:
    return decode_pgm(Path(path).read_bytes())


def write_pgm(image: PgmImage, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_pgm(image))
    return path


def to_unit(image: PgmImage) -> np.ndarray:
    """Samples scaled to [0, 1] as float32."""
    return (image.samples.astype(np.float64) / image.maxval).astype(np.float32)


def from_unit(values: np.ndarray, maxval: int = 65535) -> PgmImage:
    """Clamp to [0, 1] and quantize to the given maxval."""
    if maxval not in MAXVALS:
        raise PgmMaxvalError(f"maxval must be 255 or 65535, got {maxval}")
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise PgmError(f"expected a 2-D image, got shape {arr.shape}")
    q = np.rint(np.clip(arr, 0.0, 1.0) * maxval)
    samples = q.astype(np.uint16 if maxval == 65535 else np.uint8)
    return PgmImage(arr.shape[1], arr.shape[0], maxval, samples)


def min_max_8bit(values: np.ndarray) -> PgmImage:
    """Per-image min-max normalization to an 8-bit PGM (flat images map to 0)."""
    arr = np.asarray(values, dtype=np.float64)
    lo, hi = float(arr.min()), float(arr.max())
    scaled = (arr - lo) / (hi - lo) if hi > lo else np.zeros_like(arr)
    return from_unit(scaled, 255)


def side_by_side(panels) -> PgmImage:
    """Min-max normalize each panel separately, then concatenate left to right."""
    heights = {np.asarray(p).shape[0] for p in panels}
    if len(heights) != 1:
        raise PgmError(f"panels must share one height, got {sorted(heights)}")
    return PgmImage(
        width=sum(np.asarray(p).shape[1] for p in panels),
        height=heights.pop(),
        maxval=255,
        samples=np.hstack([min_max_8bit(p).samples for p in panels]),
    )
