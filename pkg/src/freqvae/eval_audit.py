"""Reconstruction audit: pixel/frequency losses, perceptual proxy, feature Frechet distance, per-class NMSE."""

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ArgumentError, DataError, DimensionError
from .features import RandomFeatureProvider, perceptual_proxy
from .wavelet import frequency_losses

SYM_TOL = 1e-8
EIG_TOL = -1e-6


def _check_pairs(pairs):
    pairs = list(pairs)
    if not pairs:
        raise DataError("no (x, xhat) pairs supplied")
    for x, xh in pairs:
        if np.shape(x) != np.shape(xh):
            raise DimensionError(f"pair shape mismatch: {np.shape(x)} vs {np.shape(xh)}")
    return pairs


def recon_metrics(pairs):
    """Dataset means of (pixel MSE, low-frequency MSE, high-frequency MSE)."""
    pairs = _check_pairs(pairs)
    rec = low = high = 0.0
    for x, xh in pairs:
        d = np.asarray(x, np.float64) - np.asarray(xh, np.float64)
        rec += float(np.mean(d * d))
        lo, hi = frequency_losses(x, xh)
        low += lo
        high += hi
    n = len(pairs)
    return rec / n, low / n, high / n


@dataclass
class FeatureStats:
    mu: np.ndarray
    sigma: np.ndarray
    n: int


def feature_stats(features):
    f = np.asarray(features, np.float64)
    if f.ndim != 2:
        raise DimensionError(f"features must be (n, D), got {f.shape}")
    n = f.shape[0]
    if n < 2:
        raise DataError(f"need at least 2 feature vectors, got {n}")
    mu = f.mean(axis=0)
    c = f - mu
    sigma = c.T @ c / (n - 1)
    return FeatureStats(mu, 0.5 * (sigma + sigma.T), n)


def matrix_sqrt_psd(a):
    """Symmetric PSD square root via eigendecomposition."""
    a = np.asarray(a, np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"matrix_sqrt_psd needs a square matrix, got {a.shape}")
    if np.max(np.abs(a - a.T), initial=0.0) > SYM_TOL * max(1.0, np.max(np.abs(a), initial=0.0)):
        raise ArgumentError("matrix is not symmetric within tolerance")
    w, v = np.linalg.eigh(0.5 * (a + a.T))
    if w.size and w.min() < EIG_TOL * max(1.0, abs(w).max()):
        raise ArgumentError(f"matrix is not positive semidefinite (min eigenvalue {w.min():.3g})")
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


def _regularize(stats):
    d = stats.sigma.shape[0]
    if stats.n < d:
        return stats.sigma + 1e-6 * np.eye(d)
    return stats.sigma


def frechet_distance(a, b):
    """|mu_a - mu_b|^2 + Tr(S_a) + Tr(S_b) - 2 Tr((S_a^1/2 S_b S_a^1/2)^1/2)."""
    if a.mu.shape != b.mu.shape:
        raise DimensionError(f"feature dims differ: {a.mu.shape} vs {b.mu.shape}")
    if np.array_equal(a.mu, b.mu) and np.array_equal(a.sigma, b.sigma):
        return 0.0  # skip eigen round-off for identical sets
    sa, sb = _regularize(a), _regularize(b)
    root_a = matrix_sqrt_psd(sa)
    inner = root_a @ sb @ root_a
    cross = matrix_sqrt_psd(0.5 * (inner + inner.T))
    diff = a.mu - b.mu
    d = float(diff @ diff + np.trace(sa) + np.trace(sb) - 2.0 * np.trace(cross))
    return max(d, 0.0)


def per_class_nmse(pairs, labels):
    """List of (class, NMSE, count) with NMSE = sum |x - xhat|^2 / sum |x|^2 per class."""
    pairs = _check_pairs(pairs)
    labels = list(labels)
    if len(labels) != len(pairs) or any(lab is None for lab in labels):
        raise DataError("every pair needs a class label")
    err, energy, count = {}, {}, {}
    for (x, xh), lab in zip(pairs, labels):
        lab = int(lab)
        x = np.asarray(x, np.float64)
        d = x - np.asarray(xh, np.float64)
        err[lab] = err.get(lab, 0.0) + float(np.sum(d * d))
        energy[lab] = energy.get(lab, 0.0) + float(np.sum(x * x))
        count[lab] = count.get(lab, 0) + 1
    out = []
    for lab in sorted(count):
        nmse = err[lab] / energy[lab] if energy[lab] > 0 else (0.0 if err[lab] == 0 else float("inf"))
        out.append((lab, nmse, count[lab]))
    return out


def top_k(per_class, k):
    """The k worst classes by NMSE, descending; ties by ascending class id."""
    per_class = list(per_class)
    if k > len(per_class):
        raise ArgumentError(f"k={k} exceeds the number of classes ({len(per_class)})")
    return sorted(per_class, key=lambda r: (-r[1], r[0]))[:k]


@dataclass
class AuditReport:
    rec_loss: float
    low_freq_loss: float
    high_freq_loss: float
    perceptual_proxy: float
    feature_frechet: float
    pair_count: int
    per_class: list = field(default_factory=list)

    COLUMNS = ("rec_loss", "low_freq_loss", "high_freq_loss", "perceptual_proxy", "feature_frechet")
    HEADERS = ("Recon. Loss", "Low Freq. Loss", "High Freq. Loss", "Perceptual", "Feature-FD")

    def to_json(self):
        d = asdict(self)
        d["per_class"] = [{"class": c, "nmse": v, "count": n} for c, v, n in self.per_class]
        return json.dumps(d, indent=2, sort_keys=False) + "\n"

    def to_text(self, name="model", config=""):
        head = ["Model", "Config", *self.HEADERS]
        row = [name, config, *(f"{getattr(self, c):.4f}" for c in self.COLUMNS)]
        widths = [max(len(h), len(r)) for h, r in zip(head, row)]
        fmt = "  ".join(f"{{:<{w}}}" for w in widths)
        lines = [fmt.format(*head), fmt.format(*row), f"pairs: {self.pair_count}"]
        return "\n".join(lines) + "\n"

    def class_csv(self, k=None):
        rows = top_k(self.per_class, k) if k else self.per_class
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", "nmse", "count"])
        for c, v, n in rows:
            w.writerow([c, repr(float(v)), n])
        return buf.getvalue()


def audit(originals, reconstructions, labels=None, provider=None, batch=64):
    """Full metric bundle for paired (C, H, W) image arrays."""
    x = np.asarray(originals, np.float32)
    xh = np.asarray(reconstructions, np.float32)
    pairs = _check_pairs(list(zip(x, xh)))
    rec, low, high = recon_metrics(pairs)
    provider = provider or RandomFeatureProvider(x.shape[1])
    lp = 0.0
    for i in range(0, len(x), batch):
        lp += perceptual_proxy(x[i:i + batch], xh[i:i + batch], provider).item() * len(x[i:i + batch])
    lp /= len(x)
    fd = frechet_distance(feature_stats(provider.pooled(x)), feature_stats(provider.pooled(xh))) \
        if len(x) >= 2 else 0.0
    per_class = per_class_nmse(pairs, labels) if labels is not None else []
    return AuditReport(rec, low, high, max(lp, 0.0), fd, len(pairs), per_class)
