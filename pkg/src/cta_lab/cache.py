"""Content-addressed array cache.

File layout (little endian):

    magic   8 bytes   b"CTALAB\\x00\\x01"
    version uint32    format version (1)
    dtype   uint32    0 = float64, 1 = complex128
    ndim    uint32
    dims    ndim x uint64
    values  row-major payload
    digest  32 bytes  sha256 of everything above

A missing file, a bad magic or version, or a digest mismatch is a cache miss.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"CTALAB\x00\x01"
VERSION = 1
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<c16")}
_CODES = {v: k for k, v in _DTYPES.items()}


def cache_key(kind: str, **payload) -> str:
    """sha256 of a canonical JSON rendering of ``kind`` and ``payload``."""
    text = json.dumps({"kind": kind, **payload}, sort_keys=True, default=_jsonable)
    return hashlib.sha256(text.encode()).hexdigest()


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return {"shape": list(obj.shape), "sha256": hashlib.sha256(np.ascontiguousarray(obj).tobytes()).hexdigest()}
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return repr(obj)


def encode(array) -> bytes:
    a = np.asarray(array)
    a = a.astype(_DTYPES[1] if np.iscomplexobj(a) else _DTYPES[0], copy=False)
    head = MAGIC + struct.pack("<III", VERSION, _CODES[a.dtype], a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape)
    body = head + np.ascontiguousarray(a).tobytes()
    return body + hashlib.sha256(body).digest()


def decode(blob: bytes) -> np.ndarray | None:
    if len(blob) < len(MAGIC) + 12 + 32 or not blob.startswith(MAGIC):
        return None
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        return None
    off = len(MAGIC)
    version, code, ndim = struct.unpack_from("<III", body, off)
    if version != VERSION or code not in _DTYPES:
        return None
    off += 12
    dims = struct.unpack_from(f"<{ndim}Q", body, off)
    off += 8 * ndim
    dt = _DTYPES[code]
    if len(body) - off != int(np.prod(dims, dtype=np.int64)) * dt.itemsize:
        return None
    return np.frombuffer(body, dt, offset=off).reshape(dims).copy()


def atomic_write(path: Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class ArrayCache:
    """Arrays keyed by content hash under ``root``; ``root=None`` disables storage."""

    def __init__(self, root):
        self.root = None if root is None else Path(root)
        self.hits = 0
        self.misses = 0

    def path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.bin"

    def store(self, key: str, array) -> Path | None:
        if self.root is None:
            return None
        p = self.path(key)
        atomic_write(p, encode(array))
        return p

    def load(self, key: str) -> np.ndarray | None:
        if self.root is None:
            return None
        p = self.path(key)
        if not p.exists():
            return None
        return decode(p.read_bytes())

    def get_or_compute(self, key: str, compute):
        got = self.load(key)
        if got is not None:
            self.hits += 1
            return got
        self.misses += 1
        value = np.asarray(compute())
        self.store(key, value)
        return value
