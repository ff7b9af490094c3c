"""Binary PPM (P6) / PGM (P5) reading and writing, 8-bit."""

import os

import numpy as np

from .errors import DataError
from .nncore.checkpoint import atomic_write_bytes


def _tokens(data):
    """Yield (token, end_offset) for the header, skipping # comments."""
    i, n = 0, len(data)
    while i < n:
        c = data[i:i + 1]
        if c == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < n and not data[j:j + 1].isspace() and data[j:j + 1] != b"#":
                j += 1
            yield data[i:j], j
            i = j


def decode_pnm(data, name="<bytes>"):
    """Return a (C, H, W) float32 array in [0, 1]."""
    toks = _tokens(data)
    magic = next(toks, (b"", 0))[0]
    if magic not in (b"P5", b"P6"):
        raise DataError(f"{name}: unsupported magic {magic!r} (need binary P5/P6)")
    try:
        w = int(next(toks)[0])
        h = int(next(toks)[0])
        maxval_tok, end = next(toks)
        maxval = int(maxval_tok)
    except (StopIteration, ValueError):
        raise DataError(f"{name}: truncated or malformed header") from None
    if not 0 < maxval < 65536:
        raise DataError(f"{name}: bad maxval {maxval}")
    channels = 3 if magic == b"P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = w * h * channels
    body = data[end + 1:]
    if len(body) < count * dtype.itemsize:
        raise DataError(f"{name}: pixel data truncated")
    px = np.frombuffer(body, dtype=dtype, count=count).reshape(h, w, channels)
    return (px.astype(np.float32) / maxval).transpose(2, 0, 1).copy()


def read_image(path):
    with open(path, "rb") as f:
        return decode_pnm(f.read(), os.fspath(path))


def to_uint8(img, value_range="unit"):
    img = np.asarray(img, np.float64)
    if value_range == "symmetric":
        img = (img + 1.0) / 2.0
    return np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)


def encode_pnm(img, value_range="unit"):
    img = np.asarray(img)
    if img.ndim == 2:
        img = img[None]
    c, h, w = img.shape
    if c not in (1, 3):
        raise DataError(f"can only write 1- or 3-channel images, got {c}")
    px = to_uint8(img, value_range).transpose(1, 2, 0)
    magic = b"P6" if c == 3 else b"P5"
    return magic + f"\n{w} {h}\n255\n".encode("ascii") + px.tobytes()


def write_image(path, img, value_range="unit"):
    atomic_write_bytes(path, encode_pnm(img, value_range))


def heatmap(arr):
    """Min/max stretch of a 2-D array to an 8-bit (1, H, W) image in [0, 1]."""
    a = np.asarray(arr, np.float64)
    lo, hi = float(a.min()), float(a.max())
    if hi > lo:
        a = (a - lo) / (hi - lo)
    else:
        a = np.zeros_like(a)
    return a[None]


def list_images(directory):
    names = sorted(n for n in os.listdir(directory) if n.lower().endswith((".ppm", ".pgm")))
    return [os.path.join(directory, n) for n in names]
