"""Shared helpers for the package's little-endian binary file formats."""

from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np

__all__ = [
    "DataFormatError",
    "expect_magic",
    "read_array",
    "read_exact",
    "read_u32",
    "write_array",
    "write_u32",
]


class DataFormatError(ValueError):
    """A file does not match its declared binary format."""


def read_exact(f: BinaryIO, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise DataFormatError(f"truncated {what}: expected {n} bytes, got {len(buf)}")
    return buf


def write_u32(f: BinaryIO, value: int) -> None:
    f.write(struct.pack("<I", value))


def read_u32(f: BinaryIO, what: str = "field") -> int:
    return struct.unpack("<I", read_exact(f, 4, what))[0]


def expect_magic(f: BinaryIO, magic: bytes) -> None:
    got = read_exact(f, len(magic), "magic")
    if got != magic:
        raise DataFormatError(f"bad magic: expected {magic!r}, got {got!r}")


def write_array(f: BinaryIO, arr: np.ndarray) -> None:
    """Tensor record: rank (u32), dims (u32 each), float32 payload."""
    arr = np.asarray(arr)
    write_u32(f, arr.ndim)
    for d in arr.shape:
        write_u32(f, d)
    f.write(arr.astype("<f4").tobytes())


def read_array(f: BinaryIO, what: str = "tensor") -> np.ndarray:
    rank = read_u32(f, f"{what} rank")
    dims = tuple(read_u32(f, f"{what} dim") for _ in range(rank))
    count = int(np.prod(dims)) if dims else 1
    payload = read_exact(f, count * 4, f"{what} payload")
    return np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
