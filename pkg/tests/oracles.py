"""Slow, independent reference implementations used only by the tests."""

import numpy as np

# rows of the orthonormal 2-D Haar basis acting on a flattened 2x2 block [a, b, c, d]
# (a b / c d): ll, lh (column detail of row highs), hl (row detail of row lows), hh
HAAR_4x4 = 0.5 * np.array([
    [1, 1, 1, 1],    # ll
    [1, -1, 1, -1],  # lh
    [1, 1, -1, -1],  # hl
    [1, -1, -1, 1],  # hh
], dtype=np.float64)


def haar_blocks(x):
    """Loop over every 2x2 block of a (C, H, W) image; returns dict of (C, H/2, W/2)."""
    x = np.asarray(x, np.float64)
    c, h, w = x.shape
    out = {k: np.zeros((c, h // 2, w // 2)) for k in ("ll", "lh", "hl", "hh")}
    for ch in range(c):
        for i in range(h // 2):
            for j in range(w // 2):
                blk = np.array([x[ch, 2 * i, 2 * j], x[ch, 2 * i, 2 * j + 1],
                                x[ch, 2 * i + 1, 2 * j], x[ch, 2 * i + 1, 2 * j + 1]])
                coef = HAAR_4x4 @ blk
                for k, v in zip(("ll", "lh", "hl", "hh"), coef):
                    out[k][ch, i, j] = v
    return out


def frequency_losses_loop(x, xhat):
    a, b = haar_blocks(x), haar_blocks(xhat)
    lo_sum, lo_n = 0.0, 0
    for v1, v2 in zip(a["ll"].ravel(), b["ll"].ravel()):
        lo_sum += (v1 - v2) ** 2
        lo_n += 1
    hi_sum, hi_n = 0.0, 0
    for k in ("lh", "hl", "hh"):
        for v1, v2 in zip(a[k].ravel(), b[k].ravel()):
            hi_sum += (v1 - v2) ** 2
            hi_n += 1
    return lo_sum / lo_n, hi_sum / hi_n


def kl_loop(mu, logvar):
    """0.5 * sum(mu^2 + e^lv - 1 - lv) / batch, by explicit iteration."""
    mu = np.asarray(mu, np.float64)
    lv = np.asarray(logvar, np.float64)
    total = 0.0
    for m, l in zip(mu.ravel(), lv.ravel()):
        total += 0.5 * (m * m + np.exp(l) - 1.0 - l)
    return total / mu.shape[0]


def cos(a, b, eps=1e-8):
    na = np.sqrt(sum(v * v for v in a) + eps * eps)
    nb = np.sqrt(sum(v * v for v in b) + eps * eps)
    return sum(p * q for p, q in zip(a, b)) / (na * nb)


def vf_loop(z, f, m1, m2, w_hyper):
    """Scalar-loop VF loss; z and f are (N, c, h, w) with matching shapes (no projection)."""
    z = np.asarray(z, np.float64)
    f = np.asarray(f, np.float64)
    n, c, h, w = z.shape
    pos = [(i, j) for i in range(h) for j in range(w)]
    t1, c1 = 0.0, 0
    t2, c2 = 0.0, 0
    for b in range(n):
        for (i, j) in pos:
            t1 += max(0.0, 1.0 - cos(z[b, :, i, j], f[b, :, i, j]) - m1)
            c1 += 1
        for p in range(len(pos)):
            for q in range(p + 1, len(pos)):
                (i1, j1), (i2, j2) = pos[p], pos[q]
                dz = cos(z[b, :, i1, j1], z[b, :, i2, j2])
                df = cos(f[b, :, i1, j1], f[b, :, i2, j2])
                t2 += max(0.0, abs(dz - df) - m2)
                c2 += 1
    out = t1 / c1
    if c2:
        out += w_hyper * t2 / c2
    return out


def nmse_loop(pairs, labels):
    err, en = {}, {}
    for (x, xh), lab in zip(pairs, labels):
        e = 0.0
        s = 0.0
        for a, b in zip(np.ravel(x), np.ravel(xh)):
            e += (float(a) - float(b)) ** 2
            s += float(a) ** 2
        err[lab] = err.get(lab, 0.0) + e
        en[lab] = en.get(lab, 0.0) + s
    return {k: err[k] / en[k] for k in err}


def frechet_literal(mu_a, sa, mu_b, sb):
    """|mu_a - mu_b|^2 + Tr(Sa + Sb - 2 sqrtm(Sa Sb)) with scipy's general sqrtm."""
    from scipy import linalg
    covmean = linalg.sqrtm(sa @ sb)
    covmean = np.real(covmean)
    d = mu_a - mu_b
    return float(d @ d + np.trace(sa) + np.trace(sb) - 2 * np.trace(covmean))


def covariance_loop(f):
    f = np.asarray(f, np.float64)
    n, d = f.shape
    mu = [sum(f[k, i] for k in range(n)) / n for i in range(d)]
    cov = np.zeros((d, d))
    for i in range(d):
        for j in range(d):
            cov[i, j] = sum((f[k, i] - mu[i]) * (f[k, j] - mu[j]) for k in range(n)) / (n - 1)
    return np.array(mu), cov
