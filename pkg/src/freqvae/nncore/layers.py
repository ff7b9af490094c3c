"""Parameterized layers built on the tensor ops."""

import numpy as np

from . import tensor as T
from .tensor import parameter


class Module:
    """Minimal container: parameters are discovered by walking attributes."""

    def named_parameters(self, prefix=""):
        out = {}
        for key, val in vars(self).items():
            if key.startswith("_"):
                continue
            name = f"{prefix}{key}"
            if isinstance(val, T.Tensor) and val.requires_grad:
                out[name] = val
            elif isinstance(val, Module):
                out.update(val.named_parameters(name + "."))
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        out.update(item.named_parameters(f"{name}.{i}."))
        return out

    def parameters(self):
        return list(self.named_parameters().values())

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def num_parameters(self):
        return int(sum(p.value.size for p in self.parameters()))

    def astype(self, dtype):
        for p in self.parameters():
            p.value = p.value.astype(dtype)
            p.grad = None
        return self

    def state_dict(self):
        return {k: v.value for k, v in self.named_parameters().items()}

    def load_state_dict(self, state, strict=True):
        params = self.named_parameters()
        missing = set(params) - set(state)
        if strict and missing:
            raise KeyError(f"missing tensors in state: {sorted(missing)[:5]}")
        for k, p in params.items():
            if k in state:
                v = np.asarray(state[k])
                if v.shape != p.value.shape:
                    raise ValueError(f"{k}: shape {v.shape} does not match {p.value.shape}")
                p.value = v.astype(p.value.dtype, copy=True)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def kaiming_uniform(rng, shape, fan_in, dtype=np.float32):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Conv2d(Module):
    def __init__(self, rng, cin, cout, k=3, stride=1, padding="same", init_scale=1.0):
        fan_in = cin * k * k
        self.weight = parameter(kaiming_uniform(rng, (cout, cin, k, k), fan_in) * init_scale)
        self.bias = parameter(np.zeros(cout, dtype=np.float32))
        self._stride = stride
        self._padding = padding

    def forward(self, x):
        return T.conv2d(x, self.weight, self.bias, self._stride, self._padding)


class Linear(Module):
    def __init__(self, rng, fin, fout):
        self.weight = parameter(kaiming_uniform(rng, (fout, fin), fin))
        self.bias = parameter(np.zeros(fout, dtype=np.float32))

    def forward(self, x):
        return T.linear(x, self.weight, self.bias)


class GroupNorm(Module):
    def __init__(self, channels, groups=None, eps=1e-5):
        self.groups = groups or min(8, channels)
        while channels % self.groups:
            self.groups -= 1
        self._eps = eps
        self.gamma = parameter(np.ones(channels, dtype=np.float32))
        self.beta = parameter(np.zeros(channels, dtype=np.float32))

    def forward(self, x):
        return T.group_norm(x, self.groups, self.gamma, self.beta, self._eps)


class ResBlock(Module):
    """GroupNorm -> Swish -> conv, twice, plus a (1x1 projected) skip."""

    def __init__(self, rng, cin, cout):
        self.norm1 = GroupNorm(cin)
        self.conv1 = Conv2d(rng, cin, cout)
        self.norm2 = GroupNorm(cout)
        self.conv2 = Conv2d(rng, cout, cout, init_scale=0.1)
        self.skip = Conv2d(rng, cin, cout, k=1) if cin != cout else None

    def forward(self, x):
        h = self.conv1(T.swish(self.norm1(x)))
        h = self.conv2(T.swish(self.norm2(h)))
        s = self.skip(x) if self.skip is not None else x
        return h + s


class Downsample(Module):
    def __init__(self, rng, channels):
        self.conv = Conv2d(rng, channels, channels, k=3, stride=2)

    def forward(self, x):
        return self.conv(x)


class Upsample(Module):
    """Nearest-neighbour 2x followed by a 3x3 convolution."""

    def __init__(self, rng, channels):
        self.conv = Conv2d(rng, channels, channels, k=3)

    def forward(self, x):
        return self.conv(T.nearest_upsample2x(x))
