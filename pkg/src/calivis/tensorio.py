"""Named-tensor container ("STEN").

Layout, all integers little-endian::

    b"STEN"  u8 version=1  u16 entry_count
    per entry:
        u16 name_len, name (UTF-8)
        u8 dtype (1 = float32 LE)
        u8 ndim, ndim x u32 dims
        prod(dims) * 4 bytes of row-major data

Rank-3 feature maps are stored as (H, W, C), kernels as
(k_h, k_w, in, out), biases as (out,).
"""
from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from .errors import TensorFormatError, ValidationError

MAGIC = b"STEN"
VERSION = 1
DTYPE_F32 = 1


def dumps(tensors: dict) -> bytes:
    if len(tensors) > 0xFFFF:
        raise ValidationError("too many entries for one container")
    parts = [MAGIC, struct.pack("<BH", VERSION, len(tensors))]
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        a = np.ascontiguousarray(arr, dtype="<f4")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<BB", DTYPE_F32, a.ndim))
        parts.append(struct.pack(f"<{a.ndim}I", *a.shape))
        parts.append(a.tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise TensorFormatError(TensorFormatError.TRUNCATED, f"{what} at byte {self.pos}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def loads(buf: bytes) -> dict:
    if buf[:4] != MAGIC:
        raise TensorFormatError(TensorFormatError.BAD_MAGIC, repr(buf[:4]))
    r = _Reader(buf)
    r.pos = 4
    (version,) = r.unpack("<B", "version")
    if version != VERSION:
        raise TensorFormatError(TensorFormatError.BAD_VERSION, str(version))
    (count,) = r.unpack("<H", "entry count")
    out = {}
    for _ in range(count):
        (nlen,) = r.unpack("<H", "name length")
        name = r.take(nlen, "name").decode("utf-8")
        dtype, ndim = r.unpack("<BB", "entry header")
        if dtype != DTYPE_F32:
            raise TensorFormatError(TensorFormatError.BAD_DTYPE, f"{name}: dtype code {dtype}")
        dims = r.unpack(f"<{ndim}I", "dims")
        n = int(np.prod(dims, dtype=np.int64))
        data = r.take(4 * n, f"payload of {name!r}")
        out[name] = np.frombuffer(data, dtype="<f4").astype(np.float32).reshape(dims)
    if r.pos != len(buf):
        raise TensorFormatError(TensorFormatError.TRUNCATED, f"{len(buf) - r.pos} trailing bytes")
    return out


def atomic_write(path, data: bytes | str):
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, mode) as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_tensor_file(path, tensors: dict):
    atomic_write(path, dumps(tensors))


def load_tensor_file(path) -> dict:
    with open(path, "rb") as f:
        return loads(f.read())
