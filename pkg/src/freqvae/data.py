"""Synthetic texture datasets and manifest handling."""

import os

import numpy as np

from .errors import DataError


def synthetic_textures(n, size=32, channels=3, seed=0, labels=False):
    """Unit-range images mixing oriented sinusoids, checkerboards and noise.

    Each image draws a random blend of: a low-frequency sinusoid, a
    high-frequency sinusoid, a checkerboard with random cell size, and white
    noise. With ``labels=True`` also returns the index of the dominant
    component as a class id.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    images = np.empty((n, channels, size, size), dtype=np.float32)
    classes = np.empty(n, dtype=np.int64)
    for i in range(n):
        w = rng.dirichlet(np.ones(4))
        theta = rng.uniform(0, np.pi)
        k_lo = rng.uniform(1, 3) * 2 * np.pi / size
        k_hi = rng.uniform(6, 12) * 2 * np.pi / size
        proj = np.cos(theta) * xx + np.sin(theta) * yy
        cell = rng.choice([1, 2, 4])
        checker = ((yy // cell + xx // cell) % 2) * 2.0 - 1.0
        base = np.empty((channels, size, size))
        for c in range(channels):
            phase = rng.uniform(0, 2 * np.pi, size=2)
            base[c] = (w[0] * np.sin(k_lo * proj + phase[0])
                       + w[1] * np.sin(k_hi * proj + phase[1])
                       + w[2] * checker
                       + w[3] * rng.standard_normal((size, size)))
        tint = rng.uniform(0.35, 0.65, size=(channels, 1, 1))
        images[i] = np.clip(tint + 0.35 * base, 0.0, 1.0)
        classes[i] = int(np.argmax(w))
    return (images, classes) if labels else images


def read_manifest(path):
    """Parse ``path[,class]`` lines. Returns (root, entries) with entries (rel, class or None)."""
    root = os.path.dirname(os.path.abspath(path))
    entries = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            rel, _, cls = line.partition(",")
            rel = rel.strip()
            if not os.path.exists(os.path.join(root, rel)):
                raise DataError(f"{path}:{lineno}: missing file {rel}")
            if cls.strip():
                try:
                    cid = int(cls)
                except ValueError:
                    raise DataError(f"{path}:{lineno}: class id {cls.strip()!r} is not an integer") from None
                if cid < 0:
                    raise DataError(f"{path}:{lineno}: negative class id {cid}")
                entries.append((rel, cid))
            else:
                entries.append((rel, None))
    if not entries:
        raise DataError(f"manifest {path} lists no images")
    return root, entries
