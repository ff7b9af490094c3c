"""Central finite-difference gradient checks."""

import numpy as np

from . import tensor as T


def numeric_grad(fn, arrays, index, step=1e-3):
    """d fn / d arrays[index] by central differences; ``fn`` maps arrays -> float."""
    x = arrays[index]
    grad = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + step
        fp = fn(arrays)
        x[i] = orig - step
        fm = fn(arrays)
        x[i] = orig
        grad[i] = (fp - fm) / (2 * step)
    return grad


def relative_error(a, b):
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12))


def check_op(build, arrays, step=1e-3):
    """Compare analytic and numeric gradients of sum(build(*tensors) * probe).

    A fixed random probe turns any output into a scalar without symmetric
    cancellations. Returns the worst relative error over all inputs.
    """
    probe_rng = np.random.default_rng(1234)
    probe = None

    def scalar(arrs):
        nonlocal probe
        out = build(*[T.Tensor(a, op="const") for a in arrs]).value
        if probe is None:
            probe = probe_rng.standard_normal(out.shape).astype(out.dtype)
        return float(np.sum(out.astype(np.float64) * probe))

    scalar(arrays)
    leaves = [T.parameter(a) for a in arrays]
    out = build(*leaves)
    out.backward(probe.astype(out.dtype))
    worst = 0.0
    for i, leaf in enumerate(leaves):
        num = numeric_grad(scalar, arrays, i, step)
        worst = max(worst, relative_error(leaf.grad, num))
    return worst


def _suite_cases(rng, dtype):
    """(name, build, arrays) for every op and layer, plus a 3-layer composite."""
    from .gaussian import DiagGaussianLatent, kl_diag_gaussian, reparameterize

    def r(*shape, scale=1.0):
        return (rng.standard_normal(shape) * scale).astype(dtype)

    def away_from_zero(*shape):
        v = rng.uniform(0.1, 1.0, size=shape) * rng.choice([-1, 1], size=shape)
        return v.astype(dtype)

    x4 = r(2, 4, 6, 6)
    cases = []
    for stride in (1, 2):
        for pad in ("same", "valid"):
            cases.append((f"conv2d(s{stride},{pad})",
                          lambda a, w, b, s=stride, p=pad: T.conv2d(a, w, b, s, p),
                          [x4.copy(), r(3, 4, 3, 3, scale=0.3), r(3)]))
    cases += [
        ("conv2d(1x1)", lambda a, w: T.conv2d(a, w), [x4.copy(), r(5, 4, 1, 1)]),
        ("nearest_upsample2x", T.nearest_upsample2x, [r(2, 3, 3, 3)]),
        ("avg_pool2x", T.avg_pool2x, [r(2, 3, 4, 4)]),
        ("linear", T.linear, [r(3, 5), r(4, 5), r(4)]),
        ("swish", T.swish, [r(2, 5)]),
        ("leaky_relu", lambda a: T.leaky_relu(a, 0.2), [away_from_zero(2, 5)]),
        ("relu", T.relu, [away_from_zero(2, 5)]),
        ("tanh", T.tanh, [r(2, 5)]),
        ("sigmoid", T.sigmoid, [r(2, 5)]),
        ("exp", T.exp, [r(2, 5, scale=0.5)]),
        ("sqrt", T.sqrt, [np.abs(r(2, 5)) + dtype(0.5)]),
        ("abs", T.absolute, [away_from_zero(2, 5)]),
        ("clip", lambda a: T.clip(a, -0.5, 0.5), [away_from_zero(2, 5) * dtype(0.4)]),
        ("group_norm", lambda a, g, b: T.group_norm(a, 2, g, b), [x4.copy(), r(4), r(4)]),
        ("add(broadcast)", T.add, [r(2, 3, 4), r(1, 3, 1)]),
        ("mul(broadcast)", T.mul, [r(2, 3, 4), r(3, 1)]),
        ("div", T.div, [r(2, 3), np.abs(r(2, 3)) + dtype(0.5)]),
        ("concat_channels", lambda a, b: T.concat_channels([a, b]), [r(2, 2, 3, 3), r(2, 3, 3, 3)]),
        ("mean_reduce", lambda a: T.mean_reduce(a, axis=1), [r(2, 3, 4)]),
        ("sum", lambda a: T.sum_(a, axis=(0, 2), keepdims=True), [r(2, 3, 4)]),
        ("getitem", lambda a: a[:, 1:3], [r(2, 4, 3)]),
        ("l1", T.l1, [r(2, 6), r(2, 6)]),
        ("l2", T.l2, [r(2, 6), r(2, 6)]),
    ]

    eps = r(2, 3, 2, 2)

    def reparam(mu, lv):
        lat = DiagGaussianLatent(mu, lv)
        out = lat.mean + T.exp(lat.logvar * 0.5) * T.Tensor(eps, op="const")
        return out

    cases += [
        ("reparameterize", reparam, [r(2, 3, 2, 2), r(2, 3, 2, 2, scale=0.5)]),
        ("kl_diag_gaussian", lambda mu, lv: kl_diag_gaussian(DiagGaussianLatent(mu, lv)),
         [r(2, 3, 2, 2), r(2, 3, 2, 2, scale=0.5)]),
    ]

    def composite(a, w1, g, b, w2, w3):
        h = T.swish(T.group_norm(T.conv2d(a, w1), 2, g, b))
        h = T.leaky_relu(T.conv2d(T.nearest_upsample2x(h), w2, stride=2), 0.2)
        return T.tanh(T.conv2d(h, w3))

    cases.append(("composite(3-layer)", composite,
                  [r(2, 3, 4, 4), r(4, 3, 3, 3, scale=0.4), r(4), r(4),
                   r(4, 4, 3, 3, scale=0.3), r(2, 4, 1, 1, scale=0.5)]))
    return cases


TOLERANCE = {"float32": 1e-3, "float64": 1e-6}


def run_suite(dtype=np.float64, seed=0, step=None):
    """Return {case name: worst relative error} over the full op set.

    Default step: 1e-3 in 32-bit (rounding-limited), 1e-5 in 64-bit
    (truncation-limited).
    """
    rng = np.random.default_rng(seed)
    dtype = np.dtype(dtype).type
    if step is None:
        step = 1e-5 if dtype == np.float64 else 1e-3
    return {name: check_op(build, arrays, step) for name, build, arrays in _suite_cases(rng, dtype)}
