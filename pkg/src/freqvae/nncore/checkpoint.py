"""Named-tensor binary files.

Layout (all integers little-endian uint32)::

    b"FAVAE1" | count | count x (name_len | utf-8 name | rank | dims[rank] | float32 data)
"""

import os
import struct
import tempfile

import numpy as np

from ..errors import DataError

MAGIC = b"FAVAE1"


def atomic_write_bytes(path, data):
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_tensors(tensors):
    parts = [MAGIC, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f4")  # keeps rank 0 (ascontiguousarray would not)
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes(order="C"))
    return b"".join(parts)


def decode_tensors(data):
    if data[:len(MAGIC)] != MAGIC:
        raise DataError("not a FAVAE1 tensor file (bad magic)")
    off = len(MAGIC)

    def take(fmt):
        nonlocal off
        vals = struct.unpack_from(fmt, data, off)
        off += struct.calcsize(fmt)
        return vals

    try:
        (count,) = take("<I")
        out = {}
        for _ in range(count):
            (nlen,) = take("<I")
            name = data[off:off + nlen].decode("utf-8")
            off += nlen
            (rank,) = take("<I")
            dims = tuple(take(f"<{rank}I")) if rank else ()
            n = int(np.prod(dims)) if rank else 1
            arr = np.frombuffer(data, dtype="<f4", count=n, offset=off).reshape(dims)
            off += 4 * n
            out[name] = arr.astype(np.float32)
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise DataError(f"truncated or corrupt tensor file: {exc}") from exc
    return out


def save_tensors(path, tensors):
    atomic_write_bytes(path, encode_tensors(tensors))


def load_tensors(path):
    with open(path, "rb") as f:
        return decode_tensors(f.read())
