"""freqvae: a numpy lab for frequency-split VAEs.

Images are split by a level-1 Haar transform into a low band (LL) and
packed details (LH, HL, HH), encoded by two independent VAE branches, and
audited with pixel, frequency, perceptual-proxy and Frechet metrics.
"""

from . import nncore
from .errors import (ArgumentError, ConfigError, DataError, DimensionError, FavaeError,
                     StateError, TrainingError)
from .wavelet import (SubbandSet, NormParams, dwt2_haar, idwt2_haar, normalize_subbands,
                      denormalize_subbands, pack_high, unpack_high, frequency_losses)
from .spectrum import (SpectrumGrid, power_spectrum, average_spectra, log_view, radial_profile,
                       band_energy)
from .favae import FaVaeConfig, FaVaeModel, Trainer, CoupledVae, reconstruct, train
from .eval_audit import AuditReport, audit, frechet_distance, feature_stats, per_class_nmse, top_k
from .fusion_diffusion import fuse, split, extract_latents, diffusion_train, diffusion_sample

__version__ = "0.1.0"
