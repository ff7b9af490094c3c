"""Pluggable feature providers for the perceptual proxy, VF alignment and Frechet metrics.

The default is a frozen, seeded stack of random convolutions. Real
foundation-model features can be dropped in as per-image tensor files.
"""

import os

import numpy as np

from . import nncore as nn
from .errors import DataError, DimensionError
from .nncore import tensor as T


class RandomFeatureProvider:
    """Three frozen conv stages (3x3, leaky ReLU; stages 2-3 stride 2)."""

    def __init__(self, in_channels=3, seed=0, widths=(16, 32, 64)):
        rng = np.random.default_rng(seed)
        self.in_channels = in_channels
        self.widths = tuple(widths)
        self._kernels = []
        cin = in_channels
        for w in self.widths:
            k = nn.layers.kaiming_uniform(rng, (w, cin, 3, 3), cin * 9)
            self._kernels.append(T.Tensor(k, op="const"))
            cin = w

    @property
    def dim(self):
        return sum(self.widths)

    def stages(self, x):
        """Differentiable stage activations of a (N, C, H, W) batch."""
        x = T.as_tensor(x)
        if x.shape[1] != self.in_channels:
            raise DimensionError(
                f"provider expects {self.in_channels} channels, got input {x.shape}"
            )
        outs = []
        h = x
        for i, k in enumerate(self._kernels):
            if k.dtype != h.dtype:
                k = T.Tensor(k.value.astype(h.dtype), op="const")
            stride = 1 if i == 0 or min(h.shape[-2:]) < 4 else 2
            h = T.leaky_relu(T.conv2d(h, k, stride=stride), 0.2)
            outs.append(h)
        return outs

    def stage_arrays(self, images):
        return [s.value for s in self.stages(np.asarray(images, np.float32))]

    def pooled(self, images, batch=64):
        """(N, D) global-average-pooled features, D = sum of stage widths."""
        images = np.asarray(images, np.float32)
        rows = []
        for i in range(0, len(images), batch):
            st = self.stage_arrays(images[i:i + batch])
            rows.append(np.concatenate([s.mean(axis=(2, 3)) for s in st], axis=1))
        return np.concatenate(rows, axis=0).astype(np.float64)


class FileFeatureProvider:
    """Features precomputed per image: ``<root>/<key>.fvt`` with ``stage0..`` tensors."""

    def __init__(self, root):
        self.root = os.fspath(root)

    def _load(self, key):
        path = os.path.join(self.root, f"{key}.fvt")
        if not os.path.exists(path):
            raise DataError(f"no feature file for {key!r} at {path}")
        tensors = nn.load_tensors(path)
        stages = [tensors[k] for k in sorted(tensors) if k.startswith("stage")]
        if not stages:
            raise DataError(f"{path} holds no stage tensors")
        return stages

    def stage_arrays_for(self, keys):
        per_image = [self._load(k) for k in keys]
        n_stages = len(per_image[0])
        out = []
        for s in range(n_stages):
            shapes = {p[s].shape for p in per_image}
            if len(shapes) != 1:
                raise DataError(f"feature stage {s} has inconsistent shapes {sorted(shapes)}")
            out.append(np.stack([p[s] for p in per_image]))
        return out

    def pooled_for(self, keys):
        stages = self.stage_arrays_for(keys)
        return np.concatenate([s.reshape(s.shape[0], s.shape[1], -1).mean(axis=2) for s in stages], axis=1)


def _unit_normalize(f, eps=1e-10):
    norm = T.sqrt(T.sum_(f * f, axis=1, keepdims=True) + eps)
    return f / norm


def perceptual_distance(stages_a, stages_b):
    """Mean over stages of the per-position squared distance of channel-normalized features."""
    if len(stages_a) != len(stages_b):
        raise DataError("feature stage counts differ")
    total = None
    for a, b in zip(stages_a, stages_b):
        a, b = T.as_tensor(a), T.as_tensor(b)
        if a.shape != b.shape:
            raise DataError(f"feature shape mismatch: {a.shape} vs {b.shape}")
        d = _unit_normalize(a) - _unit_normalize(b)
        term = T.mean_reduce(T.sum_(d * d, axis=1))
        total = term if total is None else total + term
    return total * (1.0 / len(stages_a))


def perceptual_proxy(x, xhat, provider):
    """Perceptual distance between two image batches under ``provider``.

    Gradients flow into ``xhat`` when it is a Tensor; ``x`` is treated as fixed.
    """
    x = np.asarray(x.value if isinstance(x, T.Tensor) else x)
    if x.ndim == 3:
        x = x[None]
    if isinstance(xhat, np.ndarray) and xhat.ndim == 3:
        xhat = xhat[None]
    ref = [s.detach() for s in provider.stages(x)]
    return perceptual_distance(ref, provider.stages(xhat))
