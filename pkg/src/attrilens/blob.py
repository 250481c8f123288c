"""Binary tensor blobs: a tiny self-describing on-disk format.

Layout, all little-endian:

    4 bytes   magic "VZT1"
    1 byte    dtype code (1=f32, 2=f64, 3=i64, 4=u8)
    1 byte    ndim
    8*ndim    extents as u64
    payload   row-major element bytes

A 2x2 f32 tensor is exactly 38 bytes; a shape-(0,) tensor is 14.
Decoding is strict: wrong magic, unknown dtype code, truncation, and
trailing bytes all raise FormatError with the byte offset of the fault.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .tensor import DTYPES, Tensor

MAGIC = b"VZT1"

_DTYPE_CODES = {"f32": 1, "f64": 2, "i64": 3, "u8": 4}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


def encode_tensor(t: Tensor) -> bytes:
    if t.ndim > 255:
        raise FormatError(f"ndim {t.ndim} exceeds 255", offset=5)
    head = MAGIC + bytes([_DTYPE_CODES[t.dtype], t.ndim])
    extents = struct.pack(f"<{t.ndim}Q", *t.shape)
    payload = np.ascontiguousarray(t.data, dtype=t.data.dtype.newbyteorder("<")).tobytes()
    return head + extents + payload


def decode_tensor(raw: bytes) -> Tensor:
    if len(raw) < 6:
        raise FormatError(f"blob truncated at {len(raw)} bytes", offset=len(raw))
    if raw[:4] != MAGIC:
        raise FormatError(f"bad magic {raw[:4]!r}", offset=0)
    code = raw[4]
    if code not in _CODE_DTYPES:
        raise FormatError(f"unknown dtype code {code}", offset=4)
    dtype = _CODE_DTYPES[code]
    ndim = raw[5]
    body = 6 + 8 * ndim
    if len(raw) < body:
        raise FormatError("extents truncated", offset=len(raw))
    shape = struct.unpack_from(f"<{ndim}Q", raw, 6)
    count = 1
    for e in shape:
        count *= e
    npdtype = DTYPES[dtype].newbyteorder("<")
    expected = body + count * npdtype.itemsize
    if len(raw) < expected:
        raise FormatError(
            f"payload truncated: {len(raw)} of {expected} bytes", offset=len(raw)
        )
    if len(raw) > expected:
        raise FormatError(f"{len(raw) - expected} trailing bytes", offset=expected)
    arr = np.frombuffer(raw, dtype=npdtype, count=count, offset=body)
    return Tensor(arr.reshape(shape).astype(DTYPES[dtype], copy=False))


def write_blob(path: str | os.PathLike, t: Tensor) -> None:
    Path(path).write_bytes(encode_tensor(t))


def read_blob(path: str | os.PathLike) -> Tensor:
    return decode_tensor(Path(path).read_bytes())
