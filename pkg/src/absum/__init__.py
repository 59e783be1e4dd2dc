"""Absum: sum-of-coefficients regularization for convolution filters.

Numerics, a small NumPy CNN trained with proximal momentum SGD, Fourier and
gradient attacks, and the measurement harness used to compare regularizers.
"""

from .attacks import PGDSpec, high_frequency_attack, pgd, sfa, sfa_pattern
from .circulant import build_circulant, singular_values_dft, snc_clip
from .data import load_desk_mnist, load_idx
from .estimator import AbsumCNNClassifier, HighFrequencyFilter, SFATransformer
from .evaluate import sfa_grid
from .regularize import RegularizerConfig, absum_prox, absum_prox_bank
from .train import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "AbsumCNNClassifier", "HighFrequencyFilter", "SFATransformer", "load_desk_mnist",
    "load_idx", "sfa_grid", "PGDSpec", "RegularizerConfig", "TrainConfig", "absum_prox", "absum_prox_bank",
    "build_circulant", "high_frequency_attack", "pgd", "sfa", "sfa_pattern",
    "singular_values_dft", "snc_clip", "train",
]
