"""Two-branch frequency-aware VAE over level-1 Haar subbands.

The low branch (E_L, D_L) sees the normalized LL band; the high branch
(E_H, D_H) sees the packed detail bands [LH, HL, HH]. The branches share no
parameters, optimizers or discriminators.
"""

import csv
import io
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import nncore as nn
from . import wavelet as wv
from .errors import ConfigError, DataError, DimensionError, TrainingError
from .features import RandomFeatureProvider, perceptual_proxy
from .nncore import tensor as T

LOG_FIELDS = ("step", "branch", "total", "rec", "kl", "vf", "gan_g", "gan_d", "lpips_proxy")


# configuration -------------------------------------------------------------

@dataclass
class BranchConfig:
    in_channels: int
    base_width: int = 32
    stages: int = 3
    res_blocks: int = 2
    latent_channels: int = 8
    beta: float = 1e-5
    lambda_vf: float = 0.0
    lambda_gan: float = 0.0
    lambda_lpips: float = 0.0
    rec: str = "l2"

    def __post_init__(self):
        if self.latent_channels <= 0:
            raise ConfigError("latent_channels must be positive")
        if self.rec not in ("l1", "l2", "wavelet"):
            raise ConfigError(f"unknown rec loss {self.rec!r}")

    @property
    def factor(self):
        return 2 ** self.stages

    def widths(self):
        return [self.base_width * 2 ** i for i in range(self.stages)]


@dataclass
class FaVaeConfig:
    image_channels: int = 3
    base_width: int = 32
    base_width_high: int = 0  # 0: same as base_width
    stages: int = 3
    res_blocks: int = 2
    latent_channels_low: int = 8
    latent_channels_high: int = 8
    beta: float = 1e-5
    beta_high: float = -1.0  # negative: share beta with the low branch
    lambda_vf: float = 0.1
    lambda_gan: float = 0.1
    lambda_lpips: float = 0.1
    gan_weight_high: float = 1.0
    vf_m1: float = 0.5
    vf_m2: float = 0.25
    vf_w_hyper: float = 0.1
    disc_width: int = 32
    warmup_frac: float = 0.25
    lr: float = 1e-4
    batch: int = 8
    steps: int = 500
    seed: int = 0
    feature_seed: int = 1234
    value_range: str = "unit"
    norm_scheme: str = "affine_per_subband"
    checkpoint_every: int = 0

    def low(self):
        return BranchConfig(self.image_channels, self.base_width, self.stages, self.res_blocks,
                            self.latent_channels_low, self.beta, self.lambda_vf,
                            self.lambda_gan, self.lambda_lpips, rec="l2")

    def high(self):
        beta = self.beta if self.beta_high < 0 else self.beta_high
        width = self.base_width_high or self.base_width
        return BranchConfig(3 * self.image_channels, width, self.stages, self.res_blocks,
                            self.latent_channels_high, beta, 0.0, self.gan_weight_high, 0.0, rec="l1")

    def tokenizer_tag(self):
        """fNcM label relative to the pixel grid (subbands already halve H, W)."""
        return f"f{2 * 2 ** self.stages}c{self.latent_channels_low + self.latent_channels_high}"


def parse_config(text, base=None):
    """Flat ``key = value`` lines into a FaVaeConfig; unknown keys are errors."""
    cfg = base or FaVaeConfig()
    types = _field_kinds()
    updates = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not sep or key not in types:
            raise ConfigError(f"line {lineno}: unrecognised entry {line!r}")
        updates[key] = val
    return config_with(cfg, updates)


def _field_kinds():
    return {f.name: f.type if isinstance(f.type, str) else f.type.__name__
            for f in fields(FaVaeConfig)}


def config_with(cfg, updates):
    types = _field_kinds()
    vals = asdict(cfg)
    for key, val in updates.items():
        if key not in types:
            raise ConfigError(f"unknown config key {key!r}")
        kind = types[key]
        try:
            vals[key] = {"int": int, "float": float, "str": str}[kind](val)
        except ValueError:
            raise ConfigError(f"{key}: cannot parse {val!r} as {kind}") from None
    return FaVaeConfig(**vals)


def format_config(cfg):
    return "".join(f"{k} = {v}\n" for k, v in asdict(cfg).items())


# networks ------------------------------------------------------------------

class Encoder(nn.Module):
    def __init__(self, rng, cfg):
        widths = cfg.widths()
        self.conv_in = nn.Conv2d(rng, cfg.in_channels, widths[0])
        self.blocks = []
        self.downs = []
        cin = widths[0]
        for w in widths:
            stage = []
            for _ in range(cfg.res_blocks):
                stage.append(nn.ResBlock(rng, cin, w))
                cin = w
            self.blocks.append(_Seq(stage))
            self.downs.append(nn.Downsample(rng, w))
        self.mid = nn.ResBlock(rng, cin, cin)
        self.norm_out = nn.GroupNorm(cin)
        self.conv_out = nn.Conv2d(rng, cin, 2 * cfg.latent_channels)
        self.moments = nn.Conv2d(rng, 2 * cfg.latent_channels, 2 * cfg.latent_channels, k=1)

    def forward(self, x):
        h = self.conv_in(x)
        for blocks, down in zip(self.blocks, self.downs):
            h = down(blocks(h))
        h = self.mid(h)
        h = self.conv_out(T.swish(self.norm_out(h)))
        return self.moments(h)


class Decoder(nn.Module):
    def __init__(self, rng, cfg):
        widths = cfg.widths()[::-1]
        c = cfg.latent_channels
        self.post = nn.Conv2d(rng, c, c, k=1)
        self.conv_in = nn.Conv2d(rng, c, widths[0])
        self.mid = nn.ResBlock(rng, widths[0], widths[0])
        self.ups = []
        self.blocks = []
        cin = widths[0]
        for w in widths:
            self.ups.append(nn.Upsample(rng, cin))
            stage = []
            for _ in range(cfg.res_blocks):
                stage.append(nn.ResBlock(rng, cin, w))
                cin = w
            self.blocks.append(_Seq(stage))
        self.norm_out = nn.GroupNorm(cin)
        self.conv_out = nn.Conv2d(rng, cin, cfg.in_channels)

    def forward(self, z):
        h = self.conv_in(self.post(z))
        h = self.mid(h)
        for up, blocks in zip(self.ups, self.blocks):
            h = blocks(up(h))
        return T.tanh(self.conv_out(T.swish(self.norm_out(h))))


class _Seq(nn.Module):
    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x


class PatchDiscriminator(nn.Module):
    """Four stride-2 conv + leaky ReLU layers and a stride-1 conv to a 1-channel logit map."""

    def __init__(self, rng, in_channels, width=32, n_strided=4):
        self.convs = []
        cin = in_channels
        for i in range(n_strided):
            cout = width * 2 ** i
            self.convs.append(nn.Conv2d(rng, cin, cout, k=3, stride=2))
            cin = cout
        self.head = nn.Conv2d(rng, cin, 1, k=3)

    def forward(self, x):
        h = x
        for conv in self.convs:
            h = T.leaky_relu(conv(h), 0.2)
        return self.head(h)


class Branch(nn.Module):
    """One encoder/decoder pair with its optional VF projection."""

    def __init__(self, rng, cfg, feature_dim=None):
        self.cfg = cfg
        self.encoder = Encoder(rng, cfg)
        self.decoder = Decoder(rng, cfg)
        self.vf_proj = (nn.Conv2d(rng, feature_dim, cfg.latent_channels, k=1)
                        if feature_dim else None)

    def named_parameters(self, prefix=""):
        out = self.encoder.named_parameters(prefix + "encoder.")
        out.update(self.decoder.named_parameters(prefix + "decoder."))
        if self.vf_proj is not None:
            out.update(self.vf_proj.named_parameters(prefix + "vf_proj."))
        return out

    def check_input(self, x):
        f = self.cfg.factor
        shape = x.shape
        if shape[1] != self.cfg.in_channels:
            raise DimensionError(f"branch expects {self.cfg.in_channels} channels, got {shape}")
        if shape[-1] % f or shape[-2] % f:
            raise DimensionError(f"spatial dims {shape[-2:]} not divisible by f={f}")

    def encode(self, x):
        x = T.as_tensor(x)
        if x.ndim == 3:
            x = T.reshape(x, (1,) + x.shape)
        self.check_input(x)
        return nn.DiagGaussianLatent.from_moments(self.encoder(x))

    def decode(self, z):
        z = T.as_tensor(z)
        if z.ndim == 3:
            z = T.reshape(z, (1,) + z.shape)
        if z.shape[1] != self.cfg.latent_channels:
            raise DimensionError(f"latent has {z.shape[1]} channels, expected {self.cfg.latent_channels}")
        return self.decoder(z)

    def roundtrip(self, x):
        """Deterministic posterior-mean reconstruction of a numpy batch."""
        return self.decode(self.encode(x).mean).value


# losses --------------------------------------------------------------------

def resample_nearest(feats, hw):
    """Nearest-neighbour resampling of (N, D, H, W) onto an (h, w) grid."""
    h, w = hw
    fh, fw = feats.shape[-2:]
    iy = (np.arange(h) * fh) // h
    ix = (np.arange(w) * fw) // w
    return feats[:, :, iy][:, :, :, ix]


def _cos_rows(a, b, eps=1e-8):
    num = T.sum_(a * b, axis=1)
    na = T.sqrt(T.sum_(a * a, axis=1) + eps * eps)
    nb = T.sqrt(T.sum_(b * b, axis=1) + eps * eps)
    return num / (na * nb)


def _gram_cos(v, idx, eps=1e-8):
    """Pairwise cosine similarity among selected positions: (N, c, P) -> (N, P, P)."""
    v = v[:, :, idx]
    n = T.sqrt(T.sum_(v * v, axis=1, keepdims=True) + eps * eps)
    u = v / n
    k = len(idx)
    a = T.reshape(u, (u.shape[0], u.shape[1], k, 1))
    b = T.reshape(u, (u.shape[0], u.shape[1], 1, k))
    return T.sum_(a * b, axis=1)


MAX_PAIR_POSITIONS = 64


def pair_positions(n_positions, seed=0):
    if n_positions <= MAX_PAIR_POSITIONS:
        return np.arange(n_positions)
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n_positions, MAX_PAIR_POSITIONS, replace=False))


def vf_alignment_loss(z, feats, proj=None, m1=0.5, m2=0.25, w_hyper=0.1, pair_seed=0):
    """Margin-hinged cosine alignment of latents with (projected) features.

    ``mean_i relu(1 - cos(z_i, f_i) - m1)`` plus ``w_hyper`` times the mean
    over distinct position pairs of ``relu(|cos(z_i, z_j) - cos(f_i, f_j)| - m2)``.
    ``feats`` is resampled (nearest) to the latent grid; ``proj`` maps feature
    channels to latent channels (identity when None).
    """
    z = T.as_tensor(z)
    f = np.asarray(feats.value if isinstance(feats, T.Tensor) else feats)
    if f.ndim != 4 or f.shape[0] != z.shape[0]:
        raise DimensionError(f"features {f.shape} do not match latent batch {z.shape}")
    f = T.Tensor(resample_nearest(f, z.shape[-2:]).astype(z.dtype), op="const")
    if proj is not None:
        f = proj(f)
    if f.shape != z.shape:
        raise DimensionError(f"projected features {f.shape} do not match latent {z.shape}")
    n, c, h, w = z.shape
    zf = T.reshape(z, (n, c, h * w))
    ff = T.reshape(f, (n, c, h * w))
    cos = _cos_rows(zf, ff)
    term1 = T.mean_reduce(T.relu(1.0 - cos - m1))
    if h * w < 2 or w_hyper == 0:
        return term1
    idx = pair_positions(h * w, pair_seed)
    k = len(idx)
    iu, ju = np.triu_indices(k, 1)
    diff = _gram_cos(zf, idx) - _gram_cos(ff, idx)
    pairs = diff[:, iu, ju]
    term2 = T.mean_reduce(T.relu(T.absolute(pairs) - m2))
    return term1 + w_hyper * term2


def gan_losses(real, fake, discriminator):
    """Hinge losses (gan_g, gan_d). gan_d sees a detached ``fake``."""
    real = T.as_tensor(real)
    fake = T.as_tensor(fake)
    if real.shape != fake.shape:
        raise DimensionError(f"real {real.shape} and fake {fake.shape} differ")
    logits_real = discriminator(real.detach())
    logits_fake_d = discriminator(fake.detach())
    gan_d = (T.mean_reduce(T.relu(1.0 - logits_real))
             + T.mean_reduce(T.relu(1.0 + logits_fake_d)))
    gan_g = -T.mean_reduce(discriminator(fake))
    return gan_g, gan_d


@dataclass
class LossBreakdown:
    branch: str
    total: float = 0.0
    rec: float = 0.0
    kl: float = 0.0
    vf: float = 0.0
    gan_g: float = 0.0
    gan_d: float = 0.0
    lpips_proxy: float = 0.0
    weights: dict = field(default_factory=dict, repr=False)

    def recomputed_total(self):
        w = self.weights
        return (self.rec + w.get("kl", 0.0) * self.kl + w.get("vf", 0.0) * self.vf
                + w.get("gan", 0.0) * self.gan_g + w.get("lpips", 0.0) * self.lpips_proxy)

    def row(self, step):
        return [step, self.branch] + [getattr(self, k) for k in LOG_FIELDS[2:]]


def _rec_loss(cfg, x, xr, ll_channels=None):
    if cfg.rec == "l2":
        return T.l2(xr, x)
    if cfg.rec == "l1":
        return T.l1(xr, x)
    # wavelet: l2 on the LL channels, l1 on the rest (coupled baseline)
    c = ll_channels
    return T.l2(xr[:, :c], x[:, :c]) + T.l1(xr[:, c:], x[:, c:])


def branch_objective(branch, x, rng, provider=None, discriminator=None, gan_active=True,
                     pair_seed=0, vf_params=(0.5, 0.25, 0.1), ll_channels=None, name="low"):
    """Build the generator-side objective of one branch.

    Returns ``(total_node, breakdown, reconstruction_node)``. Terms with a zero
    weight are skipped entirely.
    """
    cfg = branch.cfg
    x = T.as_tensor(x)
    lat = branch.encode(x)
    z = nn.reparameterize(lat, rng)
    xr = branch.decode(z)
    rec = _rec_loss(cfg, x, xr, ll_channels)
    kl = nn.kl_diag_gaussian(lat)
    total = rec + cfg.beta * kl
    br = LossBreakdown(name, rec=rec.item(), kl=kl.item())
    weights = {"kl": cfg.beta, "vf": 0.0, "gan": 0.0, "lpips": 0.0}
    if cfg.lambda_vf > 0:
        if provider is None or branch.vf_proj is None:
            raise ConfigError("lambda_vf > 0 requires a feature provider")
        feats = provider.stages(x.value)[-1].value
        m1, m2, wh = vf_params
        vf = vf_alignment_loss(z, feats, branch.vf_proj, m1, m2, wh, pair_seed)
        total = total + cfg.lambda_vf * vf
        br.vf = vf.item()
        weights["vf"] = cfg.lambda_vf
    if cfg.lambda_lpips > 0:
        if provider is None:
            raise ConfigError("lambda_lpips > 0 requires a feature provider")
        lp = perceptual_proxy(x.value, xr, provider)
        total = total + cfg.lambda_lpips * lp
        br.lpips_proxy = lp.item()
        weights["lpips"] = cfg.lambda_lpips
    if cfg.lambda_gan > 0 and discriminator is not None and gan_active:
        gan_g = -T.mean_reduce(discriminator(xr))
        total = total + cfg.lambda_gan * gan_g
        br.gan_g = gan_g.item()
        weights["gan"] = cfg.lambda_gan
    br.total = total.item()
    br.weights = weights
    return total, br, xr


# model ---------------------------------------------------------------------

class FaVaeModel:
    def __init__(self, cfg=None):
        self.cfg = cfg or FaVaeConfig()
        seeds = np.random.SeedSequence(self.cfg.seed).spawn(4)
        low_cfg, high_cfg = self.cfg.low(), self.cfg.high()
        self.provider = RandomFeatureProvider(self.cfg.image_channels, seed=self.cfg.feature_seed)
        fdim = self.provider.widths[-1] if low_cfg.lambda_vf > 0 else None
        self.low = Branch(np.random.default_rng(seeds[0]), low_cfg, feature_dim=fdim)
        self.high = Branch(np.random.default_rng(seeds[1]), high_cfg)
        self.disc_low = PatchDiscriminator(np.random.default_rng(seeds[2]), low_cfg.in_channels,
                                           self.cfg.disc_width)
        self.disc_high = PatchDiscriminator(np.random.default_rng(seeds[3]), high_cfg.in_channels,
                                            self.cfg.disc_width)
        self.norm_params = wv.normalization_params(self.cfg.norm_scheme, self.cfg.value_range)

    def branches(self):
        return {"low": self.low, "high": self.high}

    def state_dict(self):
        out = {}
        for prefix, mod in (("low.", self.low), ("high.", self.high),
                            ("disc_low.", self.disc_low), ("disc_high.", self.disc_high)):
            out.update({prefix + k: v for k, v in mod.state_dict().items()})
        return out

    def load_state_dict(self, state):
        for prefix, mod in (("low.", self.low), ("high.", self.high),
                            ("disc_low.", self.disc_low), ("disc_high.", self.disc_high)):
            mod.load_state_dict({k[len(prefix):]: v for k, v in state.items() if k.startswith(prefix)})

    # subband plumbing ------------------------------------------------------
    def split(self, x):
        """Images (N, C, H, W) -> (normalized LL, packed normalized details)."""
        s = wv.normalize_subbands(wv.dwt2_haar(x), params=self.norm_params)
        return s.ll.astype(np.float32), wv.pack_high(s).astype(np.float32)

    def merge(self, x_low, x_high_packed):
        s = wv.unpack_high(x_high_packed, ll=x_low, norm_state=self.norm_params)
        out = wv.idwt2_haar(wv.denormalize_subbands(s))
        lo, hi = wv.VALUE_RANGES[self.cfg.value_range]
        return np.clip(out, lo, hi).astype(np.float32)

    def check_image_shape(self, x):
        f = 2 * self.low.cfg.factor
        if x.shape[-1] % f or x.shape[-2] % f:
            raise DimensionError(f"image dims {x.shape[-2:]} not divisible by 2f={f}")

    def encode(self, x):
        """Posterior means (z_L, z_H) of a batch."""
        x = np.asarray(x, np.float32)
        single = x.ndim == 3
        if single:
            x = x[None]
        self.check_image_shape(x)
        xl, xh = self.split(x)
        zl = self.low.encode(xl).mean.value
        zh = self.high.encode(xh).mean.value
        return (zl[0], zh[0]) if single else (zl, zh)

    def decode(self, z_low, z_high):
        xl = self.low.decode(z_low).value
        xh = self.high.decode(z_high).value
        return self.merge(xl, xh)


def reconstruct(x, model, batch=32):
    """DWT -> normalize -> posterior-mean encode/decode per branch -> denormalize -> IDWT -> clamp."""
    x = np.asarray(x, np.float32)
    single = x.ndim == 3
    if single:
        x = x[None]
    wv.check_image(x)
    model.check_image_shape(x)
    outs = []
    for i in range(0, len(x), batch):
        xl, xh = model.split(x[i:i + batch])
        outs.append(model.merge(model.low.roundtrip(xl), model.high.roundtrip(xh)))
    out = np.concatenate(outs, axis=0)
    return out[0] if single else out


def loss_low(x_low, model, rng=None, step=0, total_steps=None):
    cfg = model.cfg
    active = _gan_active(cfg, step, total_steps)
    return branch_objective(model.low, x_low, _as_rng(rng), model.provider, model.disc_low, active,
                            pair_seed=step, vf_params=(cfg.vf_m1, cfg.vf_m2, cfg.vf_w_hyper),
                            name="low")


def loss_high(x_high_packed, model, rng=None, step=0, total_steps=None):
    active = _gan_active(model.cfg, step, total_steps)
    return branch_objective(model.high, x_high_packed, _as_rng(rng), None, model.disc_high, active,
                            name="high")


def _as_rng(rng):
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def _gan_active(cfg, step, total_steps):
    if total_steps is None:
        return True
    return step >= math.floor(cfg.warmup_frac * total_steps)


# training ------------------------------------------------------------------

class Trainer:
    """Runs both branches in one loop with fully separate optimizers and RNG streams."""

    def __init__(self, model, total_steps=None):
        self.model = model
        cfg = model.cfg
        self.total_steps = total_steps if total_steps is not None else cfg.steps
        seeds = np.random.SeedSequence([cfg.seed, 1]).spawn(3)
        self.data_rng = np.random.default_rng(seeds[0])
        self.rngs = {"low": np.random.default_rng(seeds[1]), "high": np.random.default_rng(seeds[2])}
        self.opts = {name: nn.Adam(b, lr=cfg.lr) for name, b in model.branches().items()}
        self.disc_opts = {"low": nn.Adam(model.disc_low, lr=cfg.lr),
                          "high": nn.Adam(model.disc_high, lr=cfg.lr)}
        self.discs = {"low": model.disc_low, "high": model.disc_high}
        self.step_count = 0
        self.log = []

    def sample_batch(self, images):
        idx = self.data_rng.choice(len(images), size=min(self.model.cfg.batch, len(images)),
                                   replace=False)
        return images[np.sort(idx)]

    def step(self, batch, skip_update=()):
        """One optimization step on both branches.

        Branches named in ``skip_update`` have their gradients discarded
        before the optimizer runs (used to test that the branches are decoupled).
        """
        m = self.model
        xl, xh = m.split(np.asarray(batch, np.float32))
        inputs = {"low": xl, "high": xh}
        losses = {"low": loss_low, "high": loss_high}
        out = {}
        for name, branch in m.branches().items():
            disc = self.discs[name]
            total, br, xr = losses[name](inputs[name], m, self.rngs[name], self.step_count,
                                         self.total_steps)
            if not np.isfinite(br.total):
                raise TrainingError(self.step_count)
            branch.zero_grad()
            total.backward()
            if name in skip_update:
                branch.zero_grad()
            else:
                self.opts[name].step()
            disc.zero_grad()
            if br.weights.get("gan", 0.0) > 0:
                _, gan_d = gan_losses(inputs[name], xr.value, disc)
                gan_d.backward()
                br.gan_d = gan_d.item()
                if name not in skip_update:
                    self.disc_opts[name].step()
                disc.zero_grad()
            out[name] = br
        self.step_count += 1
        return out

    def fit(self, images, steps=None, checkpoint_path=None, callback=None):
        images = np.asarray(images, np.float32)
        if len(images) == 0:
            raise DataError("training dataset is empty")
        wv.check_image(images, self.model.cfg.value_range)
        self.model.check_image_shape(images)
        steps = self.total_steps if steps is None else steps
        every = self.model.cfg.checkpoint_every
        for _ in range(steps):
            s = self.step_count
            out = self.step(self.sample_batch(images))
            for br in out.values():
                self.log.append((s, br))
            if checkpoint_path and every and (s + 1) % every == 0:
                save_model(checkpoint_path, self.model)
            if callback is not None:
                callback(s, out)
        return self.log


def train(images, cfg, seed=None, checkpoint_path=None):
    """Train a fresh model; returns (model, loss log)."""
    if seed is not None:
        cfg = config_with(cfg, {"seed": seed})
    model = FaVaeModel(cfg)
    trainer = Trainer(model, cfg.steps)
    log = trainer.fit(images, checkpoint_path=checkpoint_path)
    return model, log


def loss_log_csv(log):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOG_FIELDS)
    for step, br in log:
        w.writerow([step, br.branch] + [repr(float(getattr(br, k))) for k in LOG_FIELDS[2:]])
    return buf.getvalue()


def smoothed(values, window=25):
    v = np.asarray(values, np.float64)
    if len(v) < window:
        window = max(1, len(v))
    return np.convolve(v, np.ones(window) / window, mode="valid")


def branch_totals(log, branch):
    return [br.total for _, br in log if br.branch == branch]


# coupled baseline ------------------------------------------------------------

class CoupledVae:
    """Single VAE over all four stacked normalized subbands (the ablation baseline).

    Uses the same wavelet losses (l2 on LL channels, l1 on details) and a
    width chosen so its parameter count is as close as possible to the
    encoder/decoder total of a FaVaeModel with ``cfg``.
    """

    def __init__(self, cfg, target_params=None):
        self.cfg = cfg
        c = cfg.image_channels
        latent = cfg.latent_channels_low + cfg.latent_channels_high
        if target_params is None:
            ref = FaVaeModel(config_with(cfg, {"lambda_vf": 0.0}))
            target_params = ref.low.num_parameters() + ref.high.num_parameters()
        best = None
        for width in range(4, 4 * max(cfg.base_width, cfg.base_width_high) + 1):
            bc = BranchConfig(4 * c, width, cfg.stages, cfg.res_blocks, latent, cfg.beta, rec="wavelet")
            n = _count_branch_params(bc)
            if best is None or abs(n - target_params) < abs(best[1] - target_params):
                best = (bc, n)
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 7]))
        self.branch = Branch(rng, best[0])
        self.target_params = target_params
        self.norm_params = wv.normalization_params(cfg.norm_scheme, cfg.value_range)

    def split(self, x):
        s = wv.normalize_subbands(wv.dwt2_haar(x), params=self.norm_params)
        return np.concatenate([s.ll, wv.pack_high(s)], axis=1).astype(np.float32)

    def merge(self, stacked):
        c = self.cfg.image_channels
        s = wv.unpack_high(stacked[:, c:], ll=stacked[:, :c], norm_state=self.norm_params)
        lo, hi = wv.VALUE_RANGES[self.cfg.value_range]
        return np.clip(wv.idwt2_haar(wv.denormalize_subbands(s)), lo, hi).astype(np.float32)

    def reconstruct(self, x, batch=32):
        x = np.asarray(x, np.float32)
        outs = [self.merge(self.branch.roundtrip(self.split(x[i:i + batch])))
                for i in range(0, len(x), batch)]
        return np.concatenate(outs, axis=0)

    def fit(self, images, steps=None):
        cfg = self.cfg
        steps = cfg.steps if steps is None else steps
        seeds = np.random.SeedSequence([cfg.seed, 1]).spawn(3)
        data_rng = np.random.default_rng(seeds[0])
        rng = np.random.default_rng(seeds[1])
        opt = nn.Adam(self.branch, lr=cfg.lr)
        images = np.asarray(images, np.float32)
        log = []
        for s in range(steps):
            idx = np.sort(data_rng.choice(len(images), size=min(cfg.batch, len(images)), replace=False))
            x = self.split(images[idx])
            total, br, _ = branch_objective(self.branch, x, rng, ll_channels=cfg.image_channels,
                                            name="coupled")
            if not np.isfinite(br.total):
                raise TrainingError(s)
            self.branch.zero_grad()
            total.backward()
            opt.step()
            log.append((s, br))
        return log


def _count_branch_params(bc):
    rng = np.random.default_rng(0)
    return Branch(rng, bc).num_parameters()


# persistence ---------------------------------------------------------------

def save_model(path, model):
    tensors = dict(model.state_dict())
    for k, v in asdict(model.cfg).items():
        if isinstance(v, (int, float)):
            tensors[f"config.{k}"] = np.float32(v)
    tensors["config.value_range_symmetric"] = np.float32(model.cfg.value_range == "symmetric")
    tensors["config.norm_none"] = np.float32(model.cfg.norm_scheme == "none")
    nn.save_tensors(path, tensors)


def load_model(path):
    tensors = nn.load_tensors(path)
    vals = {}
    for k, kind in _field_kinds().items():
        key = f"config.{k}"
        if key in tensors and kind in ("int", "float"):
            v = float(tensors[key])
            vals[k] = int(round(v)) if kind == "int" else v
    vals["value_range"] = "symmetric" if float(tensors.get("config.value_range_symmetric", 0)) else "unit"
    vals["norm_scheme"] = "none" if float(tensors.get("config.norm_none", 0)) else "affine_per_subband"
    model = FaVaeModel(FaVaeConfig(**vals))
    model.load_state_dict({k: v for k, v in tensors.items() if not k.startswith("config.")})
    return model
