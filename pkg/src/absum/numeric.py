"""Two-dimensional DFT helpers and seeded randomness.

The DFT here uses the unnormalized kernel ``exp(-2j*pi*l*m/n)`` applied on
both axes, ``dft2(X) = F @ X @ F``, and ``idft2`` carries the full ``1/n**2``.
Both accept stacks of square matrices in the trailing two axes.
"""

from __future__ import annotations

import numpy as np


def dft_matrix(n: int) -> np.ndarray:
    """Symmetric Fourier matrix with ``F[l, m] = exp(-2j*pi*l*m/n)``."""
    if n < 1:
        raise ValueError(f"DFT size must be positive, got {n}")
    idx = np.arange(n)
    # reduce l*m mod n first so large n keeps full phase accuracy
    return np.exp(-2j * np.pi * (np.outer(idx, idx) % n) / n)


def _check_square(m: np.ndarray) -> int:
    if m.ndim < 2 or m.shape[-1] != m.shape[-2]:
        raise ValueError(f"expected square matrices in the last two axes, got shape {m.shape}")
    return m.shape[-1]


def dft2(m) -> np.ndarray:
    m = np.asarray(m)
    n = _check_square(m)
    f = dft_matrix(n)
    return f @ m @ f


def idft2(m) -> np.ndarray:
    m = np.asarray(m)
    n = _check_square(m)
    fc = dft_matrix(n).conj()
    return (fc @ m @ fc) / (n * n)


def fftshift(m) -> np.ndarray:
    """Roll the last two axes by ``n // 2`` so the DC bin sits at the center."""
    m = np.asarray(m)
    n = _check_square(m)
    return np.roll(m, shift=(n // 2, n // 2), axis=(-2, -1))


def ifftshift(m) -> np.ndarray:
    m = np.asarray(m)
    n = _check_square(m)
    return np.roll(m, shift=(-(n // 2), -(n // 2)), axis=(-2, -1))


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; the same seed always yields the same stream."""
    return np.random.Generator(np.random.PCG64(int(seed)))
