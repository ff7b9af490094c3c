import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from freqvae import spectrum as sp
from freqvae.errors import ArgumentError, DimensionError, StateError

pow2 = st.sampled_from([2, 4, 8, 16])


def test_fft_matches_direct_dft(rng):
    for n in (8, 16):
        x = rng.standard_normal((2, n, n))
        np.testing.assert_allclose(sp.fft2(x), sp.dft2_direct(x), atol=1e-5 * n * n)


def test_fft_matches_numpy(rng):
    x = rng.standard_normal((3, 8, 32))
    np.testing.assert_allclose(sp.fft2(x), np.fft.fft2(x), atol=1e-9)


def test_zero_residual():
    g = sp.power_spectrum(np.zeros((3, 8, 8)))
    assert np.all(g.psd == 0) and g.count == 1 and not g.log_scaled


def test_constant_is_pure_dc():
    c, h, w = 0.3, 8, 16
    g = sp.power_spectrum(np.full((1, h, w), c))
    dc = g.psd[h // 2, w // 2]
    assert dc == pytest.approx((c * h * w) ** 2 / (h * w))
    rest = g.psd.copy()
    rest[h // 2, w // 2] = 0
    assert np.abs(rest).max() < 1e-20


def cosine(n, k):
    x = np.arange(n)
    return np.tile(np.cos(2 * np.pi * k * x / n), (n, 1))[None]


def test_cosine_two_bins():
    n, k = 8, 3
    g = sp.power_spectrum(cosine(n, k))
    ref = np.abs(sp.dft2_direct(cosine(n, k))[0]) ** 2 / (n * n)
    np.testing.assert_allclose(g.psd, np.fft.fftshift(ref), atol=1e-9)
    nz = np.argwhere(g.psd > 1e-9)
    cols = sorted(int(c) - n // 2 for _, c in nz)
    assert cols == [-k, k] and all(r == n // 2 for r, _ in nz)


def test_non_pow2_rejected_with_hint():
    with pytest.raises(DimensionError, match="center-crop to 8"):
        sp.power_spectrum(np.zeros((1, 12, 8)))


def test_average_spectra():
    a = cosine(8, 3)
    b = np.full((1, 8, 8), 0.5)
    ga = sp.power_spectrum(a)
    gb = sp.power_spectrum(b)
    avg = sp.average_spectra([(a, np.zeros_like(a)), (b, np.zeros_like(b))])
    np.testing.assert_allclose(avg.psd, (ga.psd + gb.psd) / 2)
    assert avg.count == 2
    one = sp.average_spectra([(a, np.zeros_like(a))])
    np.testing.assert_array_equal(one.psd, ga.psd)
    same = sp.average_spectra([(a, a), (b, b)])
    assert np.all(same.psd == 0)


def test_average_errors():
    with pytest.raises(ArgumentError):
        sp.average_spectra([])
    with pytest.raises(DimensionError):
        sp.average_spectra([(np.zeros((1, 4, 4)),) * 2, (np.zeros((1, 8, 8)),) * 2])


def test_average_permutation_invariant(rng):
    pairs = [(rng.standard_normal((2, 8, 8)), rng.standard_normal((2, 8, 8))) for _ in range(5)]
    a = sp.average_spectra(pairs)
    b = sp.average_spectra(pairs[::-1])
    np.testing.assert_allclose(a.psd, b.psd, rtol=1e-12)


def test_log_view():
    g = sp.SpectrumGrid(np.array([[0.0, 1.0], [2.0, 3.0]]), False, 1)
    lv = sp.log_view(g)
    assert lv.psd[0, 0] == pytest.approx(-12.0)
    assert lv.psd[0, 1] == pytest.approx(0.0, abs=1e-9)
    assert np.all(np.diff(lv.psd.ravel()) > 0)
    with pytest.raises(StateError):
        sp.log_view(lv)
    with pytest.raises(ArgumentError):
        sp.log_view(g, 0.0)


def test_radial_profile_dc_only():
    psd = np.zeros((8, 8))
    psd[4, 4] = 5.0
    prof = sp.radial_profile(sp.SpectrumGrid(psd, False, 1), 4)
    assert prof[0][1] > 0 and all(m == 0 for _, m in prof[1:])
    with pytest.raises(ArgumentError):
        sp.radial_profile(sp.SpectrumGrid(psd, False, 1), 1)


@given(pow2, pow2, st.integers(2, 12), st.integers(0, 2 ** 31))
def test_prop_radial_partition(h, w, bins, seed):
    psd = np.random.default_rng(seed).uniform(0, 1, (h, w))
    g = sp.SpectrumGrid(psd, False, 1)
    prof = sp.radial_profile(g, bins)
    pops = sp.radial_populations((h, w), bins)
    assert pops.sum() == h * w
    total = sum(m * n for (_, m), n in zip(prof, pops))
    assert total == pytest.approx(psd.sum(), rel=1e-4)


def test_white_noise_profile_flat():
    rng = np.random.default_rng(7)
    pairs = [(rng.standard_normal((1, 16, 16)), np.zeros((1, 16, 16))) for _ in range(256)]
    g = sp.average_spectra(pairs)
    means = np.array([m for _, m in sp.radial_profile(g, 8)])
    assert np.all(np.abs(means / means.mean() - 1) <= 0.15)


def test_band_energy_cases():
    z = sp.SpectrumGrid(np.zeros((8, 8)), False, 1)
    assert sp.band_energy(z, 0.5) == (0.0, 0.0)
    dc = np.zeros((8, 8))
    dc[4, 4] = 3.0
    for cut in (0.1, 0.5, 0.9):
        assert sp.band_energy(sp.SpectrumGrid(dc, False, 1), cut) == (3.0, 0.0)
    # k / Nyquist = 0.75 along the width of a 16x16 grid: radius 0.75 / sqrt(2) = 0.53
    g = sp.power_spectrum(cosine(16, 6))
    low, high = sp.band_energy(g, 0.5)
    assert low == pytest.approx(0.0, abs=1e-12)
    assert high == pytest.approx(g.total, rel=1e-9)


def test_band_energy_errors():
    g = sp.SpectrumGrid(np.zeros((4, 4)), False, 1)
    for cut in (0.0, 1.0, -0.2):
        with pytest.raises(ArgumentError):
            sp.band_energy(g, cut)
    with pytest.raises(StateError):
        sp.band_energy(sp.log_view(g), 0.5)


@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 3), pow2, pow2),
                  elements=st.floats(-1, 1, width=32)),
       st.floats(0.05, 0.95))
def test_prop_spectrum_invariants(r, cutoff):
    g = sp.power_spectrum(r)
    assert np.all(g.psd >= 0)
    # Plancherel: sum psd = mean over channels of sum r^2
    assert g.total == pytest.approx(np.mean(np.sum(r * r, axis=(1, 2))), rel=1e-4, abs=1e-9)
    low, high = sp.band_energy(g, cutoff)
    assert low + high == pytest.approx(g.total, rel=1e-6, abs=1e-12)
    # Hermitian point symmetry around the centre (on the wrapped grid)
    p = np.fft.ifftshift(g.psd)
    flipped = np.roll(p[::-1, ::-1], (1, 1), axis=(0, 1))
    np.testing.assert_allclose(p, flipped, rtol=1e-5, atol=1e-9)


def test_center_crop_pow2():
    x = np.arange(2 * 12 * 20).reshape(2, 12, 20)
    c, (th, tw) = sp.center_crop_pow2(x)
    assert c.shape == (2, 8, 16) and (th, tw) == (8, 16)
    np.testing.assert_array_equal(c, x[:, 2:10, 2:18])
