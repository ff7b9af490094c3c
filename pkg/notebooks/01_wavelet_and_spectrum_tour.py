"""
Subbands and spectra of a synthetic texture
===========================================

Split one texture into Haar subbands, check that nothing is lost, then look
at where the energy sits in the Fourier plane.
"""

# %%
# A synthetic texture: sinusoids, a checkerboard and noise blended per image.
import numpy as np
from freqvae import data, wavelet as wv, spectrum as sp

x = data.synthetic_textures(1, size=32, seed=3)[0]
print("image", x.shape, "range", x.min().round(3), x.max().round(3))

# %%
# Level-1 Haar: four half-resolution bands. The transform is orthonormal so
# energy is preserved and the inverse is exact up to float round-off.
s = wv.dwt2_haar(x.astype(np.float64))
for name, band in zip(wv.SUBBANDS, s.bands()):
    print(f"{name}: energy {np.sum(band ** 2):9.3f}")
print("image energy", np.sum(x.astype(np.float64) ** 2).round(3))
print("round-trip error", np.abs(wv.idwt2_haar(s) - x).max())

# %%
# The model sees normalized subbands: every band divided by 2 and LL centred
# on the midpoint of its range, so for unit images LL lies in [-0.5, 0.5].
n = wv.normalize_subbands(s)
print("normalized LL range", n.ll.min().round(3), n.ll.max().round(3))

# %%
# Frequency losses compare two images band by band. Dropping every detail
# band leaves L_L at zero and puts the whole error in L_H.
blurred = wv.idwt2_haar(wv.SubbandSet(s.ll, 0 * s.lh, 0 * s.hl, 0 * s.hh))
print("L_L, L_H after dropping details:", wv.frequency_losses(x, blurred))

# %%
# Spectrum of the blur residual: almost all energy beyond half Nyquist.
g = sp.power_spectrum(x - blurred)
low, high = sp.band_energy(g, 0.5)
print(f"residual energy below r=0.5: {low:.4f}, above: {high:.4f}")
for r, p in sp.radial_profile(g, 8):
    print(f"  r={r:.3f}  {'#' * int(60 * p / g.psd.max())}")
