import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from freqvae import eval_audit as ea
from freqvae import wavelet as wv
from freqvae.errors import ArgumentError, DataError, DimensionError
from freqvae.features import RandomFeatureProvider

import oracles


def stats(mu, sigma, n=100):
    return ea.FeatureStats(np.asarray(mu, float), np.asarray(sigma, float), n)


def random_stats(rng, d):
    b = rng.standard_normal((d, d))
    return stats(rng.standard_normal(d), b @ b.T + 0.1 * np.eye(d))


# recon metrics ------------------------------------------------------------------

def test_recon_identical(rng):
    x = rng.uniform(0, 1, (3, 3, 8, 8))
    assert ea.recon_metrics(zip(x, x)) == (0.0, 0.0, 0.0)


def test_recon_vs_loop(rng):
    x = rng.uniform(0, 1, (4, 2, 4, 6))
    y = rng.uniform(0, 1, (4, 2, 4, 6))
    rec, lo, hi = ea.recon_metrics(zip(x, y))
    ref_rec = np.mean([sum((a - b) ** 2 for a, b in zip(p.ravel(), q.ravel())) / p.size
                       for p, q in zip(x, y)])
    freq = [oracles.frequency_losses_loop(p, q) for p, q in zip(x, y)]
    assert rec == pytest.approx(ref_rec, abs=1e-6)
    assert lo == pytest.approx(np.mean([f[0] for f in freq]), abs=1e-6)
    assert hi == pytest.approx(np.mean([f[1] for f in freq]), abs=1e-6)


def test_recon_errors():
    with pytest.raises(DataError):
        ea.recon_metrics([])
    with pytest.raises(DimensionError):
        ea.recon_metrics([(np.zeros((1, 2, 2)), np.zeros((1, 4, 4)))])


# feature stats ------------------------------------------------------------------

def test_two_point_covariance():
    v = np.array([1.0, -2.0, 0.5])
    s = ea.feature_stats(np.stack([v, -v]))
    mu, cov = oracles.covariance_loop(np.stack([v, -v]))
    np.testing.assert_allclose(s.mu, 0)
    np.testing.assert_allclose(s.sigma, cov)
    np.testing.assert_allclose(s.sigma, 2 * np.outer(v, v))


def test_stats_identical_and_shift(rng):
    f = np.tile(rng.standard_normal(4), (5, 1))
    assert np.all(ea.feature_stats(f).sigma == 0)
    g = rng.standard_normal((6, 3))
    a, b = ea.feature_stats(g), ea.feature_stats(g + 2.5)
    np.testing.assert_allclose(b.mu, a.mu + 2.5)
    with pytest.raises(DataError):
        ea.feature_stats(g[:1])


def test_stats_vs_loop(rng):
    f = rng.standard_normal((7, 4))
    mu, cov = oracles.covariance_loop(f)
    s = ea.feature_stats(f)
    np.testing.assert_allclose(s.mu, mu, atol=1e-12)
    np.testing.assert_allclose(s.sigma, cov, atol=1e-12)


# matrix sqrt -------------------------------------------------------------------

def test_sqrt_cases(rng):
    np.testing.assert_allclose(ea.matrix_sqrt_psd(np.eye(3)), np.eye(3), atol=1e-12)
    np.testing.assert_allclose(ea.matrix_sqrt_psd(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-12)
    b = rng.standard_normal((6, 6))
    a = b @ b.T
    s = ea.matrix_sqrt_psd(a)
    assert np.linalg.norm(s @ s - a) / np.linalg.norm(a) < 1e-5


def test_sqrt_errors():
    with pytest.raises(ArgumentError):
        ea.matrix_sqrt_psd(np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(ArgumentError):
        ea.matrix_sqrt_psd(np.diag([1.0, -0.1]))
    np.testing.assert_allclose(ea.matrix_sqrt_psd(np.diag([1.0, -1e-9])), np.diag([1.0, 0.0]))


# frechet -----------------------------------------------------------------------

def test_frechet_closed_forms():
    a = stats([0.0], [[1.0]])
    assert ea.frechet_distance(a, a) == 0.0
    assert ea.frechet_distance(a, stats([1.0], [[1.0]])) == pytest.approx(1.0, abs=1e-6)
    d = ea.frechet_distance(stats([1.0, 0.0], np.diag([1.0, 4.0])), stats([0.0, 0.0], np.diag([4.0, 1.0])))
    assert d == pytest.approx(3.0, abs=1e-6)


@given(st.integers(1, 3), st.integers(0, 2 ** 31))
def test_prop_frechet_matches_literal_form(d, seed):
    rng = np.random.default_rng(seed)
    a, b = random_stats(rng, d), random_stats(rng, d)
    got = ea.frechet_distance(a, b)
    ref = oracles.frechet_literal(a.mu, a.sigma, b.mu, b.sigma)
    assert got == pytest.approx(ref, rel=1e-5, abs=1e-5)
    assert got == pytest.approx(ea.frechet_distance(b, a), abs=1e-6)
    assert got >= 0


def test_frechet_dim_mismatch():
    with pytest.raises(DimensionError):
        ea.frechet_distance(stats([0.0], [[1.0]]), stats([0.0, 0.0], np.eye(2)))


def test_frechet_rank_deficient_regularized(rng):
    f = rng.standard_normal((3, 10))
    s = ea.feature_stats(f)
    assert ea.frechet_distance(s, ea.feature_stats(f + 0.1)) >= 0


# fairness ----------------------------------------------------------------------

def test_nmse_cases(rng):
    x = rng.uniform(0.1, 1, (4, 1, 4, 4))
    pairs = list(zip(x, x))
    assert all(v == 0 for _, v, _ in ea.per_class_nmse(pairs, [0, 0, 1, 1]))
    res = ea.per_class_nmse(list(zip(x, np.zeros_like(x))), [0, 1, 1, 2])
    assert [(c, n) for c, _, n in res] == [(0, 1), (1, 2), (2, 1)]
    assert all(v == 1.0 for _, v, _ in res)


def test_nmse_vs_loop(rng):
    x = rng.uniform(0, 1, (6, 2, 2, 2))
    y = x + rng.normal(0, 0.1, x.shape)
    labels = [0, 1, 2, 0, 1, 2]
    ref = oracles.nmse_loop(list(zip(x, y)), labels)
    for c, v, _ in ea.per_class_nmse(list(zip(x, y)), labels):
        assert v == pytest.approx(ref[c], rel=1e-9)


def planted(seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.2, 1, (60, 3, 8, 8))
    labels = np.repeat([1, 2, 3], 20)
    noise = {1: 0.1, 2: 0.2, 3: 0.3}
    y = x + np.stack([rng.normal(0, noise[c], x.shape[1:]) for c in labels])
    return list(zip(x, y)), list(labels)


def test_planted_ranking_and_permutation():
    pairs, labels = planted(0)
    ranked = [c for c, _, _ in ea.top_k(ea.per_class_nmse(pairs, labels), 3)]
    assert ranked == [3, 2, 1]
    perm = np.random.default_rng(1).permutation(len(pairs))
    again = ea.top_k(ea.per_class_nmse([pairs[i] for i in perm], [labels[i] for i in perm]), 3)
    assert [c for c, _, _ in again] == ranked


def test_top_k_ties_and_errors():
    rows = [(5, 0.2, 1), (2, 0.2, 1), (9, 0.5, 1)]
    assert [c for c, _, _ in ea.top_k(rows, 3)] == [9, 2, 5]
    assert [c for c, _, _ in ea.top_k(rows, 1)] == [9]
    with pytest.raises(ArgumentError):
        ea.top_k(rows, 4)


def test_unlabeled_pair():
    x = np.zeros((2, 1, 2, 2))
    with pytest.raises(DataError):
        ea.per_class_nmse(list(zip(x, x)), [0, None])
    with pytest.raises(DataError):
        ea.per_class_nmse(list(zip(x, x)), [0])


# report ------------------------------------------------------------------------

def test_audit_identical_all_zero(rng):
    x = rng.uniform(0, 1, (4, 3, 8, 8)).astype(np.float32)
    r = ea.audit(x, x.copy(), labels=[0, 0, 1, 1])
    for c in ea.AuditReport.COLUMNS:
        assert getattr(r, c) == 0.0
    assert r.pair_count == 4 and [c for c, _, _ in r.per_class] == [0, 1]
    d = json.loads(r.to_json())
    assert d["per_class"][0] == {"class": 0, "nmse": 0.0, "count": 2}


def test_audit_report_formats(rng):
    x = rng.uniform(0, 1, (6, 3, 8, 8)).astype(np.float32)
    y = np.clip(x + rng.normal(0, 0.05, x.shape), 0, 1).astype(np.float32)
    r = ea.audit(x, y, labels=[0, 1, 2, 0, 1, 2], provider=RandomFeatureProvider(3, seed=4))
    assert all(getattr(r, c) > 0 for c in ea.AuditReport.COLUMNS)
    text = r.to_text("two-branch", "f8c8")
    head = text.splitlines()[0]
    for h in ("Recon. Loss", "Low Freq. Loss", "High Freq. Loss", "Perceptual", "Feature-FD"):
        assert h in head
    csv_lines = r.class_csv(2).splitlines()
    assert csv_lines[0] == "class,nmse,count" and len(csv_lines) == 3
    vals = [float(line.split(",")[1]) for line in csv_lines[1:]]
    assert vals == sorted(vals, reverse=True)
    rec, lo, hi = ea.recon_metrics(zip(x, y))
    assert (r.rec_loss, r.low_freq_loss, r.high_freq_loss) == (rec, lo, hi)
    assert wv.frequency_losses(x[0], y[0])[0] >= 0
