"""Doubly block circulant view of 2-D convolution.

A single ``h x h`` filter acting on ``n x n`` maps by circular convolution is
the ``n**2 x n**2`` matrix built by :func:`build_circulant`. Its singular
values are the magnitudes of the filter's 2-D DFT (after zero-embedding into
``n x n``), which is what :func:`singular_values_dft` computes without ever
forming the matrix.

Filters are plain arrays: a filter is ``(h, h)``, a bank is
``(c_out, c_in, h, h)``.
"""

from __future__ import annotations

import numpy as np

from .numeric import dft2, idft2


def as_filter(k) -> np.ndarray:
    k = np.asarray(k, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1] or k.shape[0] < 1:
        raise ValueError(f"filter must be a non-empty square matrix, got shape {k.shape}")
    if not np.all(np.isfinite(k)):
        raise ValueError("filter has non-finite entries")
    return k


def as_bank(bank) -> np.ndarray:
    bank = np.asarray(bank, dtype=np.float64)
    if bank.ndim != 4 or bank.shape[2] != bank.shape[3]:
        raise ValueError(f"filter bank must have shape (c_out, c_in, h, h), got {bank.shape}")
    if not np.all(np.isfinite(bank)):
        raise ValueError("filter bank has non-finite entries")
    return bank


def _check_size(h: int, n: int) -> None:
    if h > n:
        raise ValueError(f"filter side {h} exceeds map side {n}")


def embed(k: np.ndarray, n: int) -> np.ndarray:
    """Zero-pad the trailing ``h x h`` axes of ``k`` to ``n x n``."""
    h = k.shape[-1]
    _check_size(h, n)
    out = np.zeros(k.shape[:-2] + (n, n), dtype=k.dtype)
    out[..., :h, :h] = k
    return out


def circular_conv(k, x) -> np.ndarray:
    """``Y[l, m] = sum_{p,q} k[p, q] * X[(l+p) % n, (m+q) % n]``, by direct loops."""
    k = as_filter(k)
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    _check_size(k.shape[0], n)
    y = np.zeros((n, n))
    for p in range(k.shape[0]):
        for q in range(k.shape[1]):
            if k[p, q] != 0.0:
                y += k[p, q] * np.roll(x, shift=(-p, -q), axis=(0, 1))
    return y


def vec(x: np.ndarray) -> np.ndarray:
    """Stack the columns of ``x``."""
    return np.asarray(x).reshape(-1, order="F")


def unvec(v: np.ndarray, n: int) -> np.ndarray:
    return np.asarray(v).reshape((n, n), order="F")


def build_circulant(k, n: int) -> np.ndarray:
    """Explicit matrix ``A`` with ``A @ vec(X) == vec(circular_conv(k, X))``.

    ``A`` is block circulant over column offsets and each block is circulant
    over row offsets: with ``x = vec(X)`` indexed as ``col * n + row``,
    ``A[m*n + l, j*n + b] = K[(b - l) % n, (j - m) % n]``.
    """
    kp = embed(as_filter(k), n)
    idx = np.arange(n)
    # rows r = (m, l), columns c = (j, b)
    m = idx[:, None, None, None]
    l = idx[None, :, None, None]
    j = idx[None, None, :, None]
    b = idx[None, None, None, :]
    a = kp[(b - l) % n, (j - m) % n]
    return a.reshape(n * n, n * n)


def singular_values_dft(k, n: int) -> np.ndarray:
    """All ``n**2`` singular values of :func:`build_circulant`, via the DFT.

    ``sigma[u, v] = |sum_{l,m} k[l, m] exp(2j*pi*(u*l + v*m) / n)|``, returned
    flattened with ``u`` varying fastest (not sorted).
    """
    kp = embed(as_filter(k), n)
    return np.abs(dft2(kp)).reshape(-1, order="F")


def spectral_norm(k, n: int) -> float:
    return float(singular_values_dft(k, n).max())


def induced_inf_norm(k) -> float:
    """Max absolute row sum of the circulant matrix, i.e. ``sum |k|``."""
    return float(np.abs(as_filter(k)).sum())


def frobenius_norm_circulant(k, n: int) -> float:
    k = as_filter(k)
    _check_size(k.shape[0], n)
    return float(n * np.sqrt(np.sum(k * k)))


def frequency_matrices(bank, n: int) -> np.ndarray:
    """Per-frequency channel-mixing matrices, shape ``(n, n, c_out, c_in)``."""
    bank = as_bank(bank)
    spec = dft2(embed(bank, n))  # c_out, c_in, n, n
    return spec.transpose(2, 3, 0, 1)


def frequency_norms(bank, n: int) -> np.ndarray:
    """Largest singular value of every per-frequency matrix, shape ``(n, n)``."""
    mats = frequency_matrices(bank, n)
    return np.linalg.svd(mats, compute_uv=False)[..., 0]


def layer_spectral_norm(bank, n: int) -> float:
    """Spectral norm of the whole multi-channel circular convolution."""
    return float(frequency_norms(bank, n).max())


def snc_clip(bank, n: int, sigma_max: float, truncate: bool = True) -> np.ndarray:
    """Clip every singular value of the layer operator to ``sigma_max``.

    For each frequency the ``c_out x c_in`` matrix of DFT coefficients is
    decomposed, its singular values clipped, and the result transformed back
    to space. With ``truncate`` the ``n x n`` spatial filters are cut back to
    the original ``h x h`` support, so the bound then only holds
    approximately; ``truncate=False`` returns the exact ``n x n`` projection.
    Cost is ``O(n^2 c^2 (c + log n))``-ish, dominated by the SVDs.
    """
    if not sigma_max > 0:
        raise ValueError(f"sigma_max must be positive, got {sigma_max}")
    bank = as_bank(bank)
    h = bank.shape[-1]
    mats = frequency_matrices(bank, n)
    u, s, vh = np.linalg.svd(mats, full_matrices=False)
    s = np.minimum(s, sigma_max)
    clipped = (u * s[..., None, :]) @ vh  # n, n, c_out, c_in
    spatial = idft2(clipped.transpose(2, 3, 0, 1)).real
    if truncate:
        return np.ascontiguousarray(spatial[..., :h, :h])
    return spatial
