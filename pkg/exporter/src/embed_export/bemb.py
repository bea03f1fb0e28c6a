"""BEMB writing, byte-for-byte as the training side reads it.

Layout: magic "BEMB", u32 version (1), u32 H; then per record a u32 qid
byte length, the qid UTF-8 bytes, u32 row count L, and L*H float32
little-endian values row-major.
"""

from __future__ import annotations

import struct
from typing import Sequence, Tuple

import numpy as np

from .errors import ExportError

MAGIC = b"BEMB"
VERSION = 1


def write_bemb(path: str, records: Sequence[Tuple[str, np.ndarray]], h: int) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, h))
        for qid, mat in records:
            mat = np.ascontiguousarray(mat, dtype="<f4")
            if mat.ndim != 2 or mat.shape[1] != h:
                raise ExportError(
                    f"record {qid!r} has shape {mat.shape}, expected (L, {h})"
                )
            if not np.all(np.isfinite(mat)):
                raise ExportError(f"record {qid!r} contains non-finite values")
            qid_bytes = qid.encode("utf-8")
            f.write(struct.pack("<I", len(qid_bytes)))
            f.write(qid_bytes)
            f.write(struct.pack("<I", mat.shape[0]))
            f.write(mat.tobytes(order="C"))


def read_header(path: str) -> int:
    """Sanity check helper: the H a reader will see in this file."""
    with open(path, "rb") as f:
        head = f.read(12)
    if len(head) < 12 or head[:4] != MAGIC:
        raise ExportError(f"{path}: not a BEMB file")
    version, h = struct.unpack("<II", head[4:12])
    if version != VERSION:
        raise ExportError(f"{path}: unsupported BEMB version {version}")
    return h
