"""FT32 tensor files: ``b"FT32"``, u32 ndim, ndim × u32 extents, then the
row-major little-endian float32 payload."""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError

MAGIC = b"FT32"


def encode(array) -> bytes:
    a = np.array(array, dtype="<f4", order="C")
    head = MAGIC + struct.pack("<I", a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape)
    return head + a.tobytes(order="C")


def decode(buf: bytes) -> np.ndarray:
    arr, used = decode_prefix(buf)
    if used != len(buf):
        raise FormatError(f"FT32: {len(buf) - used} trailing bytes")
    return arr


def decode_prefix(buf: bytes, offset: int = 0):
    """Decode one FT32 record starting at ``offset``; return (array, end)."""
    if buf[offset:offset + 4] != MAGIC:
        raise FormatError("FT32: bad magic")
    if len(buf) < offset + 8:
        raise FormatError("FT32: truncated header")
    (ndim,) = struct.unpack_from("<I", buf, offset + 4)
    pos = offset + 8
    if len(buf) < pos + 4 * ndim:
        raise FormatError("FT32: truncated extents")
    shape = struct.unpack_from(f"<{ndim}I", buf, pos)
    pos += 4 * ndim
    n = int(np.prod(shape)) if ndim else 1
    end = pos + 4 * n
    if len(buf) < end:
        raise FormatError(f"FT32: payload needs {4 * n} bytes, have {len(buf) - pos}")
    arr = np.frombuffer(buf, dtype="<f4", count=n, offset=pos).reshape(shape)
    return arr.astype(np.float32), end


def save(path, array) -> None:
    Path(path).write_bytes(encode(array))


def load(path) -> np.ndarray:
    return decode(Path(path).read_bytes())


def write_to(stream: io.BufferedIOBase, array) -> None:
    stream.write(encode(array))
