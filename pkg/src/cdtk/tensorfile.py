"""Binary tensor files: magic "CDTK", u32 rank, u64 extents, little-endian f64 payload.

Used for checkpoints, the memory bank, and golden gradient fixtures.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"CDTK"


def write_tensor(path, array: np.ndarray) -> None:
    array = np.asarray(array, dtype=np.float64)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", array.ndim))
        fh.write(struct.pack(f"<{array.ndim}Q", *array.shape))
        fh.write(array.astype("<f8").tobytes(order="C"))


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        payload, _ = _read_from(fh, path)
    return payload


def _read_from(fh, path):
    magic = fh.read(4)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    (rank,) = struct.unpack("<I", fh.read(4))
    shape = struct.unpack(f"<{rank}Q", fh.read(8 * rank))
    count = int(np.prod(shape)) if rank else 1
    raw = fh.read(8 * count)
    if len(raw) != 8 * count:
        raise ValueError(f"{path}: truncated payload")
    data = np.frombuffer(raw, dtype="<f8").reshape(shape)
    return data.astype(np.float64), fh


def write_tensor_with_cursor(path, array: np.ndarray, cursor: int) -> None:
    """Tensor file followed by a trailing u64 (memory-bank serialization)."""
    write_tensor(path, array)
    with open(path, "ab") as fh:
        fh.write(struct.pack("<Q", cursor))


def read_tensor_with_cursor(path) -> tuple[np.ndarray, int]:
    with open(path, "rb") as fh:
        data, fh = _read_from(fh, path)
        raw = fh.read(8)
        if len(raw) != 8:
            raise ValueError(f"{path}: missing cursor")
        (cursor,) = struct.unpack("<Q", raw)
    return data, cursor


def write_tensor_dir(path, tensors: dict[str, np.ndarray]) -> None:
    """One .cdtk file per named tensor under a directory."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    for name, arr in tensors.items():
        write_tensor(root / f"{name}.cdtk", arr)


def read_tensor_dir(path) -> dict[str, np.ndarray]:
    root = Path(path)
    return {p.stem: read_tensor(p) for p in sorted(root.glob("*.cdtk"))}
