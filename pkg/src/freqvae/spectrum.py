"""Residual power spectra: 2-D PSD grids, averaging, radial profiles, band energy."""

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, DimensionError, StateError


@dataclass
class SpectrumGrid:
    psd: np.ndarray
    log_scaled: bool = False
    count: int = 1

    @property
    def total(self):
        return float(self.psd.sum())


def _is_pow2(n):
    return n >= 1 and n & (n - 1) == 0


def fft_radix2(x, axis=-1):
    """Unnormalized forward DFT along one axis (iterative Cooley-Tukey).

    Vectorized over all other axes; the axis length must be a power of two.
    """
    x = np.moveaxis(np.asarray(x, dtype=np.complex128), axis, -1)
    n = x.shape[-1]
    if not _is_pow2(n):
        raise DimensionError(f"radix-2 FFT needs a power-of-two length, got {n}")
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    a = x[..., rev].copy()
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / size)
        a = a.reshape(*a.shape[:-1], n // size, size)
        even = a[..., :half].copy()
        odd = a[..., half:] * tw
        a[..., :half] = even + odd
        a[..., half:] = even - odd
        a = a.reshape(*a.shape[:-2], n)
        size *= 2
    return np.moveaxis(a, -1, axis)


def dft2_direct(x):
    """O(N^2) reference 2-D DFT of the last two axes by explicit summation."""
    x = np.asarray(x, dtype=np.complex128)
    h, w = x.shape[-2:]
    out = np.zeros(x.shape, dtype=np.complex128)
    for u in range(h):
        for v in range(w):
            acc = 0j
            for m in range(h):
                for n in range(w):
                    acc = acc + x[..., m, n] * np.exp(-2j * np.pi * (u * m / h + v * n / w))
            out[..., u, v] = acc
    return out


def fft2(x):
    return fft_radix2(fft_radix2(x, axis=-1), axis=-2)


def power_spectrum(residual):
    """Channel-averaged |F|^2 / (H W), DC shifted to (H//2, W//2)."""
    r = np.asarray(residual, dtype=np.float64)
    if r.ndim == 2:
        r = r[None]
    if r.ndim != 3:
        raise DimensionError(f"expected a (C, H, W) residual, got shape {r.shape}")
    h, w = r.shape[-2:]
    for axis, n in (("height", h), ("width", w)):
        if not _is_pow2(n):
            raise DimensionError(
                f"{axis} {n} is not a power of two; center-crop to {1 << (n.bit_length() - 1)} first"
            )
    f = fft2(r)
    psd = (np.abs(f) ** 2 / (h * w)).mean(axis=0)
    return SpectrumGrid(np.fft.fftshift(psd), log_scaled=False, count=1)


def average_spectra(pairs):
    pairs = list(pairs)
    if not pairs:
        raise ArgumentError("average_spectra needs at least one (x, xhat) pair")
    shape = np.shape(pairs[0][0])
    acc = None
    for x, xhat in pairs:
        if np.shape(x) != shape or np.shape(xhat) != shape:
            raise DimensionError(f"pair shapes {np.shape(x)}/{np.shape(xhat)} differ from {shape}")
        g = power_spectrum(np.asarray(x, np.float64) - np.asarray(xhat, np.float64))
        acc = g.psd if acc is None else acc + g.psd
    return SpectrumGrid(acc / len(pairs), log_scaled=False, count=len(pairs))


def mean_spectrum(images):
    """Average PSD of the images themselves (residual against zero)."""
    return average_spectra((img, np.zeros_like(img)) for img in images)


def log_view(g, epsilon=1e-12):
    if g.log_scaled:
        raise StateError("spectrum is already log-scaled")
    if epsilon <= 0:
        raise ArgumentError("epsilon must be positive")
    return SpectrumGrid(np.log10(g.psd + epsilon), log_scaled=True, count=g.count)


def radius_grid(shape):
    """Distance of each bin from the centre, 0 at DC and 1 at the Nyquist corner."""
    h, w = shape
    cy, cx = h // 2, w // 2
    yy, xx = np.meshgrid(np.arange(h) - cy, np.arange(w) - cx, indexing="ij")
    return np.sqrt((yy / max(cy, 1)) ** 2 + (xx / max(cx, 1)) ** 2) / np.sqrt(2.0)


def _radial_bins(shape, n_bins):
    if n_bins < 2:
        raise ArgumentError(f"n_bins must be >= 2, got {n_bins}")
    r = radius_grid(shape).ravel()
    edges = np.linspace(0.0, r.max() * (1 + 1e-12), n_bins + 1)
    which = np.clip(np.digitize(r, edges) - 1, 0, n_bins - 1)
    return which, edges


def radial_populations(shape, n_bins=16):
    which, _ = _radial_bins(shape, n_bins)
    return np.bincount(which, minlength=n_bins)


def radial_profile(g, n_bins=16):
    """Mean PSD per radial bin as a list of (radius_fraction, mean_power)."""
    which, edges = _radial_bins(g.psd.shape, n_bins)
    sums = np.bincount(which, weights=g.psd.ravel(), minlength=n_bins)
    counts = np.bincount(which, minlength=n_bins)
    means = np.divide(sums, counts, out=np.zeros(n_bins), where=counts > 0)
    centres = 0.5 * (edges[:-1] + edges[1:])
    return [(float(c), float(m)) for c, m in zip(centres, means)]


def band_energy(g, cutoff=0.5):
    if not 0 < cutoff < 1:
        raise ArgumentError(f"cutoff must lie in (0, 1), got {cutoff}")
    if g.log_scaled:
        raise StateError("band_energy needs a linear (not log-scaled) spectrum")
    low_mask = radius_grid(g.psd.shape) <= cutoff
    low = float(g.psd[low_mask].sum())
    high = float(g.psd[~low_mask].sum())
    return low, high


def center_crop_pow2(x):
    """Crop the last two axes to the largest power of two that fits."""
    h, w = x.shape[-2:]
    th, tw = 1 << (h.bit_length() - 1), 1 << (w.bit_length() - 1)
    y0, x0 = (h - th) // 2, (w - tw) // 2
    return x[..., y0:y0 + th, x0:x0 + tw], (th, tw)
