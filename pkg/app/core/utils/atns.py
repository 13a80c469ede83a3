"""
ATNS flat tensor container.

Layout: b"ATNS" | version u8 | rank u8 | rank x extent u32le | float64le payload.
Used for checkpoints, attribution maps and trace dumps.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Union

import numpy as np

from app.core.errors import MissingInputError, TensorFormatError

MAGIC = b"ATNS"
VERSION = 1
_HEADER = len(MAGIC) + 2


def encode(array: np.ndarray) -> bytes:
    """Serialize an array as float64 with its extents."""
    data = np.ascontiguousarray(array, dtype="<f8")
    if data.ndim > 255:
        raise TensorFormatError(f"rank {data.ndim} exceeds 255")
    header = MAGIC + bytes([VERSION, data.ndim]) + struct.pack(f"<{data.ndim}I", *data.shape)
    return header + data.tobytes()


def decode(blob: bytes, path: str = "<memory>") -> np.ndarray:
    """Parse an ATNS blob; every failure names the byte offset."""
    if len(blob) < _HEADER:
        raise TensorFormatError("truncated header", path, len(blob))
    if blob[:4] != MAGIC:
        raise TensorFormatError(f"bad magic {blob[:4]!r}", path, 0)
    version, rank = blob[4], blob[5]
    if version != VERSION:
        raise TensorFormatError(f"unsupported version {version}", path, 4)
    extents_end = _HEADER + 4 * rank
    if len(blob) < extents_end:
        raise TensorFormatError("truncated extents", path, len(blob))
    shape = struct.unpack(f"<{rank}I", blob[_HEADER:extents_end])
    expected = int(np.prod(shape, dtype=np.int64)) * 8
    payload = blob[extents_end:]
    if len(payload) != expected:
        raise TensorFormatError(
            f"payload holds {len(payload)} bytes, extents {shape} need {expected}", path, extents_end
        )
    return np.frombuffer(payload, dtype="<f8").reshape(shape).astype(np.float64)


def save(path: Union[str, Path], array: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode(array))
    return path


def load(path: Union[str, Path]) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"tensor file not found: {path}")
    return decode(path.read_bytes(), str(path))
