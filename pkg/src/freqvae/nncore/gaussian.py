"""Diagonal-Gaussian posteriors: reparameterized sampling and KL to N(0, I)."""

from dataclasses import dataclass

import numpy as np

from . import tensor as T

LOGVAR_MIN, LOGVAR_MAX = -30.0, 20.0


@dataclass
class DiagGaussianLatent:
    mean: T.Tensor
    logvar: T.Tensor
    sample: T.Tensor | None = None
    eps: np.ndarray | None = None

    def __post_init__(self):
        self.mean = T.as_tensor(self.mean)
        self.logvar = T.as_tensor(self.logvar, dtype=self.mean.dtype)
        if self.logvar.op != "clip":
            self.logvar = T.clip(self.logvar, LOGVAR_MIN, LOGVAR_MAX)

    @classmethod
    def from_moments(cls, moments):
        """Split an encoder output of 2c channels into (mean, logvar)."""
        c = moments.shape[1] // 2
        return cls(moments[:, :c], moments[:, c:])

    @property
    def shape(self):
        return self.mean.shape


def _rng(seed_or_rng):
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def reparameterize(lat, rng=None):
    """mean + exp(logvar / 2) * eps; eps is stored on ``lat`` for replay."""
    rng = _rng(rng)
    eps = rng.standard_normal(lat.mean.shape).astype(lat.mean.dtype)
    std = T.exp(lat.logvar * 0.5)
    lat.eps = eps
    lat.sample = lat.mean + std * T.Tensor(eps, op="const")
    return lat.sample


def kl_diag_gaussian(lat):
    """0.5 * sum(mu^2 + exp(logvar) - 1 - logvar), averaged over the batch axis."""
    mu, lv = lat.mean, lat.logvar
    per = (mu * mu + T.exp(lv) - 1.0 - lv) * 0.5
    n = mu.shape[0]
    return T.sum_(per) * (1.0 / n)
