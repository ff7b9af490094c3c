"""Latent fusion by channel concatenation and a small DDPM over the fused latents."""

from dataclasses import dataclass

import numpy as np

from . import nncore as nn
from .errors import DataError, DimensionError, TrainingError
from .nncore import tensor as T


@dataclass
class FusedLatent:
    data: np.ndarray  # (c_L + c_H, h, w)
    split_index: int


def fuse(z_low, z_high):
    z_low, z_high = np.asarray(z_low), np.asarray(z_high)
    if z_low.shape[-2:] != z_high.shape[-2:] or z_low.ndim != z_high.ndim:
        raise DimensionError(
            f"latent grids must align: low {z_low.shape} vs high {z_high.shape}"
        )
    return FusedLatent(np.concatenate([z_low, z_high], axis=-3), z_low.shape[-3])


def split(fused):
    k = fused.split_index
    return fused.data[..., :k, :, :], fused.data[..., k:, :, :]


@dataclass
class LatentSet:
    """Standardized fused latents of a dataset plus the per-channel statistics."""
    data: np.ndarray  # (N, C, h, w), standardized
    split_index: int
    mean: np.ndarray  # (C,)
    std: np.ndarray  # (C,)

    def __len__(self):
        return len(self.data)

    def fused(self, standardized=True):
        d = self.data if standardized else self.destandardize(self.data)
        return [FusedLatent(z, self.split_index) for z in d]

    def destandardize(self, z):
        return z * self.std[:, None, None] + self.mean[:, None, None]

    def tensors(self):
        return {"latents": self.data, "mean": self.mean, "std": self.std,
                "split_index": np.float32(self.split_index)}

    @classmethod
    def from_tensors(cls, t):
        return cls(t["latents"], int(t["split_index"]), t["mean"], t["std"])


def extract_latents(images, model, batch=32):
    images = np.asarray(images, np.float32)
    if len(images) == 0:
        raise DataError("cannot extract latents from an empty dataset")
    zs = []
    for i in range(0, len(images), batch):
        zl, zh = model.encode(images[i:i + batch])
        zs.append(fuse(zl, zh).data)
    z = np.concatenate(zs, axis=0).astype(np.float64)
    mean = z.mean(axis=(0, 2, 3))
    std = z.std(axis=(0, 2, 3))
    std = np.where(std > 1e-8, std, 1.0)
    data = (z - mean[:, None, None]) / std[:, None, None]
    return LatentSet(data.astype(np.float32), model.cfg.latent_channels_low,
                     mean.astype(np.float32), std.astype(np.float32))


# schedule ------------------------------------------------------------------

@dataclass
class NoiseSchedule:
    betas: np.ndarray

    def __post_init__(self):
        # float32-representable values, so a schedule read back from a tensor file is identical
        self.betas = np.asarray(self.betas, np.float32).astype(np.float64)

    @classmethod
    def linear(cls, T_steps=200, beta_start=1e-4, beta_end=0.02):
        return cls(np.linspace(beta_start, beta_end, T_steps, dtype=np.float64))

    @property
    def T(self):
        return len(self.betas)

    @property
    def alphas(self):
        return 1.0 - self.betas

    @property
    def alpha_bars(self):
        return np.cumprod(self.alphas)

    def q_sample(self, z0, t, eps):
        """sqrt(abar_t) z0 + sqrt(1 - abar_t) eps, t broadcast over the batch."""
        ab = self.alpha_bars[np.asarray(t)]
        shape = (-1,) + (1,) * (np.ndim(z0) - 1) if np.ndim(t) else ()
        ab = np.reshape(ab, shape) if shape else ab
        return (np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * eps).astype(np.float32)


def timestep_embedding(t, dim):
    t = np.asarray(t, np.float64).reshape(-1, 1)
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    ang = t * freqs
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1).astype(np.float32)


class Denoiser(nn.Module):
    """Four-stage conv U-shape predicting eps, with a timestep embedding added per stage."""

    def __init__(self, channels, width=32, emb_dim=32, seed=0, spatial=None):
        rng = np.random.default_rng(seed)
        self.channels, self.width, self.emb_dim = channels, width, emb_dim
        self._down = spatial is None or min(spatial) >= 4
        self.t_mlp = nn.Linear(rng, emb_dim, emb_dim)
        self.t_proj = [nn.Linear(rng, emb_dim, c) for c in (width, width, 2 * width, 3 * width)]
        self.conv_in = nn.Conv2d(rng, channels, width)
        self.res1 = nn.ResBlock(rng, width, width)
        self.down = nn.Downsample(rng, width)
        self.res2 = nn.ResBlock(rng, width, 2 * width)
        self.res3 = nn.ResBlock(rng, 2 * width, 2 * width)
        self.up = nn.Upsample(rng, 2 * width)
        self.res4 = nn.ResBlock(rng, 3 * width, width)
        self.norm_out = nn.GroupNorm(width)
        self.conv_out = nn.Conv2d(rng, width, channels, init_scale=0.0)

    def forward(self, z, t):
        emb = T.swish(self.t_mlp(T.Tensor(timestep_embedding(t, self.emb_dim).astype(z.dtype))))
        def bias(i):
            e = self.t_proj[i](emb)
            return T.reshape(e, (e.shape[0], e.shape[1], 1, 1))
        h1 = self.res1(self.conv_in(z) + bias(0))
        h = self.down(h1) if self._down else h1
        h = self.res2(h + bias(1))
        h = self.res3(h + bias(2))
        if self._down:
            h = self.up(h)
        h = self.res4(T.concat_channels([h, h1]) + bias(3))
        return self.conv_out(T.swish(self.norm_out(h)))


@dataclass
class DiffusionModel:
    denoiser: Denoiser
    schedule: NoiseSchedule
    split_index: int
    mean: np.ndarray
    std: np.ndarray
    spatial: tuple

    def state_tensors(self):
        t = {f"denoiser.{k}": v for k, v in self.denoiser.state_dict().items()}
        t.update({
            "meta.betas": self.schedule.betas.astype(np.float32),
            "meta.channels": np.float32(self.denoiser.channels),
            "meta.width": np.float32(self.denoiser.width),
            "meta.emb_dim": np.float32(self.denoiser.emb_dim),
            "meta.split_index": np.float32(self.split_index),
            "meta.spatial": np.asarray(self.spatial, np.float32),
            "meta.mean": self.mean, "meta.std": self.std,
        })
        return t

    @classmethod
    def from_tensors(cls, t):
        spatial = tuple(int(v) for v in t["meta.spatial"])
        den = Denoiser(int(t["meta.channels"]), int(t["meta.width"]), int(t["meta.emb_dim"]),
                       spatial=spatial)
        den.load_state_dict({k[len("denoiser."):]: v for k, v in t.items() if k.startswith("denoiser.")})
        sched = NoiseSchedule(t["meta.betas"].astype(np.float64))
        return cls(den, sched, int(t["meta.split_index"]), t["meta.mean"], t["meta.std"], spatial)


def eps_loss(denoiser, schedule, z0, t, eps):
    zt = schedule.q_sample(z0, t, eps)
    pred = denoiser(T.Tensor(zt), t)
    return T.l2(pred, T.Tensor(eps))


def diffusion_train(latents, schedule=None, width=32, emb_dim=32, steps=2000, batch=32,
                    lr=1e-3, seed=0, log=None):
    """Fit an eps-prediction denoiser on a standardized LatentSet."""
    schedule = schedule or NoiseSchedule.linear()
    z = np.asarray(latents.data, np.float32)
    if len(z) == 0:
        raise DataError("no latents to train on")
    seeds = np.random.SeedSequence([seed, 11]).spawn(2)
    rng = np.random.default_rng(seeds[0])
    spatial = z.shape[-2:]
    den = Denoiser(z.shape[1], width, emb_dim, seed=int(seeds[1].generate_state(1)[0]), spatial=spatial)
    opt = nn.Adam(den, lr=lr)
    for step in range(steps):
        idx = rng.integers(0, len(z), size=batch)
        t = rng.integers(0, schedule.T, size=batch)
        eps = rng.standard_normal((batch,) + z.shape[1:]).astype(np.float32)
        loss = eps_loss(den, schedule, z[idx], t, eps)
        val = loss.item()
        if not np.isfinite(val):
            raise TrainingError(step)
        den.zero_grad()
        loss.backward()
        opt.step()
        if log is not None:
            log.append(val)
    return DiffusionModel(den, schedule, latents.split_index, latents.mean, latents.std, tuple(spatial))


def diffusion_sample(dm, n, seed=0):
    """Ancestral sampling; returns de-standardized FusedLatents."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 13]))
    s = dm.schedule
    shape = (n, dm.denoiser.channels) + tuple(dm.spatial)
    z = rng.standard_normal(shape).astype(np.float32)
    alphas, abar, betas = s.alphas, s.alpha_bars, s.betas
    for t in range(s.T - 1, -1, -1):
        eps = dm.denoiser(T.Tensor(z), np.full(n, t)).value
        mean = (z - betas[t] / np.sqrt(1.0 - abar[t]) * eps) / np.sqrt(alphas[t])
        if t > 0:
            z = mean + np.sqrt(betas[t]) * rng.standard_normal(shape)
        else:
            z = mean
        z = z.astype(np.float32)
    z = z * dm.std[None, :, None, None] + dm.mean[None, :, None, None]
    return [FusedLatent(zi.astype(np.float32), dm.split_index) for zi in z]


def generate_images(dm, model, n, seed=0):
    fused = diffusion_sample(dm, n, seed)
    zl = np.stack([split(f)[0] for f in fused])
    zh = np.stack([split(f)[1] for f in fused])
    imgs = model.decode(zl, zh)
    if not np.all(np.isfinite(imgs)):
        raise TrainingError(-1, "non-finite generated image")
    return list(imgs)
