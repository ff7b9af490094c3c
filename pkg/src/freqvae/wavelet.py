"""Level-1 orthonormal Haar analysis/synthesis and frequency-split losses.

Images are arrays shaped ``(C, H, W)``; every function here also accepts a
leading batch axis, ``(N, C, H, W)``, since the transform only touches the
last two axes.

Subband naming follows the row-then-column filtering order. For a 2x2 block
``[[a, b], [c, d]]``::

    ll = (a + b + c + d) / 2
    hl = (a + b - c - d) / 2     # column detail of the row lows
    lh = (a - b + c - d) / 2     # column low of the row details
    hh = (a - b - c + d) / 2
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ArgumentError, DimensionError, StateError

SQRT_HALF = 1.0 / np.sqrt(2.0)
SUBBANDS = ("ll", "lh", "hl", "hh")
VALUE_RANGES = {"unit": (0.0, 1.0), "symmetric": (-1.0, 1.0)}


@dataclass(frozen=True)
class NormParams:
    scheme: str
    scale: tuple
    offset: tuple

    def __post_init__(self):
        if any(s <= 0 for s in self.scale):
            raise ArgumentError(f"normalization scales must be positive, got {self.scale}")


@dataclass
class SubbandSet:
    ll: np.ndarray
    lh: np.ndarray
    hl: np.ndarray
    hh: np.ndarray
    norm_state: NormParams | None = field(default=None)

    def __post_init__(self):
        shapes = {b: getattr(self, b).shape for b in SUBBANDS}
        if len(set(shapes.values())) != 1:
            raise DimensionError(f"subband shapes differ: {shapes}")

    @property
    def shape(self):
        return self.ll.shape

    def bands(self):
        return [getattr(self, b) for b in SUBBANDS]

    def energy(self):
        return float(sum(np.sum(np.asarray(b, np.float64) ** 2) for b in self.bands()))


def check_image(x, value_range=None):
    """Validate an image (or batch) for a level-1 transform."""
    x = np.asarray(x)
    if x.ndim < 3:
        raise DimensionError(f"expected (C, H, W) or (N, C, H, W), got shape {x.shape}")
    h, w = x.shape[-2:]
    for axis, n in (("height", h), ("width", w)):
        if n < 2 or n % 2:
            raise DimensionError(f"{axis} must be even and >= 2 for a level-1 DWT, got {n}")
    if value_range is not None:
        lo, hi = VALUE_RANGES[value_range]
        if x.size and (x.min() < lo or x.max() > hi):
            raise ArgumentError(f"pixel values leave the declared {value_range} range [{lo}, {hi}]")
    return x


def dwt2_haar(x):
    x = check_image(x)
    if not np.issubdtype(x.dtype, np.floating):
        x = x.astype(np.float32)
    # rows: filter along width
    lo = (x[..., 0::2] + x[..., 1::2]) * SQRT_HALF
    hi = (x[..., 0::2] - x[..., 1::2]) * SQRT_HALF
    # columns: filter along height
    ll = (lo[..., 0::2, :] + lo[..., 1::2, :]) * SQRT_HALF
    hl = (lo[..., 0::2, :] - lo[..., 1::2, :]) * SQRT_HALF
    lh = (hi[..., 0::2, :] + hi[..., 1::2, :]) * SQRT_HALF
    hh = (hi[..., 0::2, :] - hi[..., 1::2, :]) * SQRT_HALF
    return SubbandSet(ll, lh, hl, hh)


def idwt2_haar(s):
    if s.norm_state is not None:
        raise StateError("subbands are normalized; call denormalize_subbands first")
    ll, lh, hl, hh = s.bands()
    dtype = np.result_type(ll.dtype, np.float32)
    *lead, h2, w2 = ll.shape
    lo = np.empty((*lead, 2 * h2, w2), dtype=dtype)
    hi = np.empty_like(lo)
    lo[..., 0::2, :] = (ll + hl) * SQRT_HALF
    lo[..., 1::2, :] = (ll - hl) * SQRT_HALF
    hi[..., 0::2, :] = (lh + hh) * SQRT_HALF
    hi[..., 1::2, :] = (lh - hh) * SQRT_HALF
    x = np.empty((*lead, 2 * h2, 2 * w2), dtype=dtype)
    x[..., 0::2] = (lo + hi) * SQRT_HALF
    x[..., 1::2] = (lo - hi) * SQRT_HALF
    return x


def normalization_params(scheme="affine_per_subband", value_range="unit"):
    """Per-subband (scale, offset) for a pixel value range.

    Dividing orthonormal coefficients by 2 gives Mulcahy-style block averages
    and half-differences; the ll band is additionally centred on the midpoint
    of its attainable range so both branch inputs sit symmetrically in [-1, 1].
    """
    if scheme == "none":
        return NormParams("none", (1.0,) * 4, (0.0,) * 4)
    if scheme != "affine_per_subband":
        raise ArgumentError(f"unknown normalization scheme {scheme!r}")
    lo, hi = VALUE_RANGES[value_range]
    ll_mid = (2 * lo + 2 * hi) / 2  # ll spans [2*lo, 2*hi]
    return NormParams(scheme, (2.0,) * 4, (ll_mid, 0.0, 0.0, 0.0))


def normalize_subbands(s, scheme="affine_per_subband", value_range="unit", params=None):
    if s.norm_state is not None:
        raise StateError("subbands are already normalized")
    p = params if params is not None else normalization_params(scheme, value_range)
    bands = [(b - o) / np.asarray(k, b.dtype) for b, k, o in zip(s.bands(), p.scale, p.offset)]
    bands = [b.astype(s.ll.dtype, copy=False) for b in bands]
    return SubbandSet(*bands, norm_state=p)


def denormalize_subbands(s):
    p = s.norm_state
    if p is None:
        raise StateError("subbands carry no normalization state")
    bands = [(b * k + o).astype(b.dtype, copy=False) for b, k, o in zip(s.bands(), p.scale, p.offset)]
    return SubbandSet(*bands, norm_state=None)


def pack_high(s):
    """Stack detail bands on the channel axis as [lh..., hl..., hh...]."""
    return np.concatenate([s.lh, s.hl, s.hh], axis=-3)


def unpack_high(packed, ll=None, norm_state=None):
    c3 = packed.shape[-3]
    if c3 % 3:
        raise DimensionError(f"packed detail tensor needs 3C channels, got {c3}")
    lh, hl, hh = np.split(packed, 3, axis=-3)
    if ll is None:
        ll = np.zeros_like(lh)
    return SubbandSet(ll, lh, hl, hh, norm_state=norm_state)


def with_ll(s, ll):
    return replace(s, ll=ll)


def frequency_losses(x, xhat):
    """(low, high) mean squared errors between unnormalized subbands."""
    x = np.asarray(x)
    xhat = np.asarray(xhat)
    if x.shape != xhat.shape:
        raise DimensionError(f"shape mismatch: {x.shape} vs {xhat.shape}")
    a = dwt2_haar(x.astype(np.float64))
    b = dwt2_haar(xhat.astype(np.float64))
    l_low = float(np.mean((a.ll - b.ll) ** 2))
    l_high = float(np.mean((pack_high(a) - pack_high(b)) ** 2))
    return l_low, l_high
