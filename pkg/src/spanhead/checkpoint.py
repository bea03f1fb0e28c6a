"""Binary checkpoints: model parameters (SHLB) and optimizer state (SHOP).

SHLB layout: magic "SHLB", u32 version=1, u32 digest length, config digest
bytes; then per parameter in sorted-name order: u32 name length, name UTF-8,
u32 ndim, u32 dims..., float32 little-endian values row-major. The digest
pins a checkpoint to the head config that produced it. Writing is fully
deterministic, so identical states produce byte-identical files.

SHOP is the same record scheme at float64 (Adam moments must round-trip
exactly for bit-exact resume) plus the step counter in the header.
"""

from __future__ import annotations

import struct
from typing import Dict, Tuple

import numpy as np

from .diffmath import ParamStore
from .errors import CheckpointError
from .loss_opt import AdamState

SHLB_MAGIC = b"SHLB"
SHOP_MAGIC = b"SHOP"
VERSION = 1


def _write_records(f, arrays: Dict[str, np.ndarray], dtype: str) -> None:
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype=dtype)
        name_bytes = name.encode("utf-8")
        f.write(struct.pack("<I", len(name_bytes)))
        f.write(name_bytes)
        f.write(struct.pack("<I", arr.ndim))
        f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        f.write(arr.tobytes(order="C"))


def _read_exact(f, n: int, path: str, what: str) -> bytes:
    raw = f.read(n)
    if len(raw) < n:
        raise CheckpointError(f"{path}: truncated while reading {what}")
    return raw


def _read_records(f, path: str, dtype: str) -> Dict[str, np.ndarray]:
    itemsize = np.dtype(dtype).itemsize
    out: Dict[str, np.ndarray] = {}
    while True:
        raw = f.read(4)
        if not raw:
            return out
        if len(raw) < 4:
            raise CheckpointError(f"{path}: truncated record header")
        (name_len,) = struct.unpack("<I", raw)
        name = _read_exact(f, name_len, path, "record name").decode("utf-8")
        (ndim,) = struct.unpack("<I", _read_exact(f, 4, path, f"{name!r} rank"))
        dims = struct.unpack(f"<{ndim}I", _read_exact(f, 4 * ndim, path, f"{name!r} dims"))
        n_items = int(np.prod(dims, dtype=np.int64)) if ndim else 1
        payload = _read_exact(f, n_items * itemsize, path, f"{name!r} data")
        out[name] = np.frombuffer(payload, dtype=dtype).reshape(dims).copy()


def save_params(path: str, store: ParamStore, config_digest: str) -> None:
    with open(path, "wb") as f:
        f.write(SHLB_MAGIC)
        digest_bytes = config_digest.encode("utf-8")
        f.write(struct.pack("<II", VERSION, len(digest_bytes)))
        f.write(digest_bytes)
        _write_records(f, store.state_arrays(), "<f4")


def load_params(path: str, expected_digest: str = None) -> Tuple[str, Dict[str, np.ndarray]]:
    """Returns (digest, arrays); refuses files whose digest does not match."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != SHLB_MAGIC:
            raise CheckpointError(f"{path}: not a parameter checkpoint (bad magic)")
        version, digest_len = struct.unpack("<II", _read_exact(f, 8, path, "header"))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        digest = _read_exact(f, digest_len, path, "config digest").decode("utf-8")
        if expected_digest is not None and digest != expected_digest:
            raise CheckpointError(
                f"{path}: checkpoint was written for a different head config "
                f"(digest {digest[:12]}… != expected {expected_digest[:12]}…)"
            )
        return digest, _read_records(f, path, "<f4")


def save_optimizer(path: str, state: AdamState) -> None:
    arrays: Dict[str, np.ndarray] = {}
    for name, arr in state.m.items():
        arrays[f"m:{name}"] = arr
    for name, arr in state.v.items():
        arrays[f"v:{name}"] = arr
    with open(path, "wb") as f:
        f.write(SHOP_MAGIC)
        f.write(struct.pack("<II", VERSION, state.step))
        _write_records(f, arrays, "<f8")


def load_optimizer(path: str, state: AdamState) -> None:
    """Restore moments and step counter into an existing AdamState."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != SHOP_MAGIC:
            raise CheckpointError(f"{path}: not an optimizer checkpoint (bad magic)")
        version, step = struct.unpack("<II", _read_exact(f, 8, path, "header"))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported optimizer version {version}")
        arrays = _read_records(f, path, "<f8")
    state.step = step
    state.m = {k[2:]: v for k, v in arrays.items() if k.startswith("m:")}
    state.v = {k[2:]: v for k, v in arrays.items() if k.startswith("v:")}
