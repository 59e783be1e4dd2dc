"""Filter regularizers: Absum, L1, weight decay and the spectral norm constraint.

Absum penalizes ``|sum(k)|`` for every ``h x h`` filter of every
(output, input) channel pair. Its proximal operator shifts all coefficients
of a filter by the same amount, so only the filter's sum is touched and the
remaining ``h**2 - 1`` directions are left free.

Regularizers apply to convolution filters only, never to dense layers or
biases.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .circulant import snc_clip

METHODS = ("absum", "l1", "wd", "snc", "none")


@dataclass(frozen=True)
class RegularizerConfig:
    """Which regularizer to apply, and how strongly.

    ``lam`` is used by absum / l1 / wd, ``sigma_max`` and ``snc_every`` by snc.
    """

    method: str = "none"
    lam: float = 0.0
    sigma_max: float = 1.0
    snc_every: int = 100
    snc_size: int | None = None

    def __post_init__(self):
        method = self.method.lower()
        object.__setattr__(self, "method", method)
        if method not in METHODS:
            raise ValueError(f"unknown regularizer {self.method!r}; expected one of {METHODS}")
        if self.lam < 0:
            raise ValueError(f"lam must be non-negative, got {self.lam}")
        if method == "snc":
            if not self.sigma_max > 0:
                raise ValueError(f"sigma_max must be positive, got {self.sigma_max}")
            if self.snc_every < 1:
                raise ValueError(f"snc_every must be a positive integer, got {self.snc_every}")

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def label(self) -> str:
        if self.method == "none":
            return "none"
        if self.method == "snc":
            return f"snc(sigma={self.sigma_max:g})"
        return f"{self.method}(lam={self.lam:g})"


def absum_penalty(k) -> float:
    return float(abs(np.sum(k)))


def absum_prox(kbar, lam: float) -> np.ndarray:
    """Closed-form ``argmin_u 0.5*||u - k||^2 + lam*|sum(u)|``.

    With ``s = sum(k)`` and ``d = k.size``: subtract ``lam`` everywhere when
    ``s > d*lam``, add ``lam`` when ``s < -d*lam``, otherwise remove the mean
    so the result sums to zero. The boundary ``|s| == d*lam`` takes the
    mean-removal branch.
    """
    if lam < 0:
        raise ValueError(f"lam must be non-negative, got {lam}")
    k = np.asarray(kbar, dtype=np.float64)
    s = k.sum()
    d = k.size
    if s > d * lam:
        return k - lam
    if s < -d * lam:
        return k + lam
    return k - s / d


def absum_prox_bank(bank, lam: float) -> np.ndarray:
    """:func:`absum_prox` applied independently to every filter of a bank."""
    if lam < 0:
        raise ValueError(f"lam must be non-negative, got {lam}")
    bank = np.asarray(bank, dtype=np.float64)
    d = bank.shape[-1] * bank.shape[-2]
    s = bank.sum(axis=(-2, -1), keepdims=True)
    shift = np.where(s > d * lam, lam, np.where(s < -d * lam, -lam, s / d))
    return bank - shift


def l1_prox(kbar, lam: float) -> np.ndarray:
    """Soft threshold ``sign(k) * max(|k| - lam, 0)``."""
    if lam < 0:
        raise ValueError(f"lam must be non-negative, got {lam}")
    k = np.asarray(kbar, dtype=np.float64)
    return np.sign(k) * np.maximum(np.abs(k) - lam, 0.0)


def weight_decay_step(kbar, lam: float, eta: float) -> np.ndarray:
    """Shrink by the gradient of ``lam*||k||^2`` folded into an SGD step."""
    if lam < 0:
        raise ValueError(f"lam must be non-negative, got {lam}")
    return np.asarray(kbar, dtype=np.float64) * (1.0 - eta * 2.0 * lam)


def apply_regularizer(bank, cfg: RegularizerConfig, eta: float, iteration: int,
                      map_size: int | None = None) -> np.ndarray:
    """One post-step regularization update of a ``(c_out, c_in, h, h)`` bank.

    Proximal methods use the effective weight ``eta * lam``. SNC only fires
    when ``iteration % cfg.snc_every == 0``; ``map_size`` is the side of the
    input map the layer sees (``cfg.snc_size`` overrides it).
    """
    method = cfg.method
    if method == "none":
        return bank
    if method == "absum":
        return absum_prox_bank(bank, eta * cfg.lam)
    if method == "l1":
        return l1_prox(bank, eta * cfg.lam)
    if method == "wd":
        return weight_decay_step(bank, cfg.lam, eta)
    if method == "snc":
        if iteration % cfg.snc_every:
            return bank
        n = cfg.snc_size or map_size
        if n is None:
            raise ValueError("snc needs the layer's input map size")
        return snc_clip(bank, n, cfg.sigma_max)
    raise ValueError(f"unknown regularizer {method!r}")
