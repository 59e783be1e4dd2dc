"""Perturbation generators.

* Single Fourier attack (SFA): one Fourier mode pair added to every image.
* L-infinity PGD with a uniform random start.
* High-frequency attack (radial low-pass in the DFT domain) and its
  complementary high-pass probe.
* Transfer harness: PGD crafted on one model, scored on another.

All attacks work on raw pixels in [0, 1] and clip their output back to that
range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .numeric import dft2, dft_matrix, fftshift, idft2, ifftshift


@dataclass(frozen=True)
class SFASpec:
    l: int
    m: int
    eps: float


@dataclass(frozen=True)
class PGDSpec:
    eps: float = 0.3
    alpha: float = 0.01
    iters: int = 40
    init_radius: float = 2.0 / 255.0

    def __post_init__(self):
        if self.eps < 0 or self.alpha <= 0 or self.iters < 0 or self.init_radius < 0:
            raise ValueError(f"invalid PGD settings: {self}")


@dataclass(frozen=True)
class HighFreqSpec:
    radius: float


@dataclass(frozen=True)
class HighPassSpec:
    radius: float


@dataclass
class AttackResult:
    perturbed: np.ndarray
    perturbation: np.ndarray
    spec: object


# -- single Fourier attack ----------------------------------------------------

def conjugate_pair(n: int, l: int, m: int) -> tuple[int, int]:
    return (-l) % n, (-m) % n


def canonical_pair(n: int, l: int, m: int) -> tuple[int, int]:
    """Representative of ``{(l, m), (n-l, n-m)}``: the lexicographically smaller."""
    return min((l % n, m % n), conjugate_pair(n, l, m))


def sfa_raw(n: int, l: int, m: int, eps: float) -> np.ndarray:
    """``eps*((1+j) F_l (x) F_m + (1-j) F_{n-l} (x) F_{n-m})`` as a complex n x n image.

    ``F_l`` is column ``l`` of the Fourier matrix and the Kronecker vector is
    unstacked column by column.
    """
    if not (0 <= l < n and 0 <= m < n):
        raise ValueError(f"frequency pair ({l}, {m}) outside 0..{n - 1}")
    f = dft_matrix(n)
    lc, mc = conjugate_pair(n, l, m)
    v = (1 + 1j) * np.kron(f[:, l], f[:, m]) + (1 - 1j) * np.kron(f[:, lc], f[:, mc])
    return eps * v.reshape((n, n), order="F")


def sfa_pattern(n: int, l: int, m: int, eps: float, normalize: bool = True,
                canonical: bool = True) -> np.ndarray:
    """Real SFA perturbation for frequency pair ``(l, m)``.

    With ``normalize`` the pattern is rescaled to an L-infinity norm of exactly
    ``eps``; otherwise the raw real part is returned. With ``canonical`` the
    pairs ``(l, m)`` and ``(n-l, n-m)`` share one pattern (that of the
    canonical member), so the attack grid is symmetric.
    """
    if not (0 <= l < n and 0 <= m < n):
        raise ValueError(f"frequency pair ({l}, {m}) outside 0..{n - 1}")
    if canonical:
        l, m = canonical_pair(n, l, m)
    raw = sfa_raw(n, l, m, 1.0 if normalize else eps)
    pattern = raw.real
    if not normalize:
        return pattern
    peak = np.abs(pattern).max()
    if peak == 0.0:
        raise ValueError(f"SFA pattern for ({l}, {m}) is identically zero")
    return pattern * (eps / peak)


def apply_additive(batch, pattern, spec=None) -> AttackResult:
    """Add ``pattern`` to every image (and channel) and clip to [0, 1]."""
    batch = np.asarray(batch, dtype=np.float64)
    perturbed = np.clip(batch + pattern, 0.0, 1.0)
    return AttackResult(perturbed, perturbed - batch, spec)


def sfa(batch, l: int, m: int, eps: float, **kw) -> AttackResult:
    batch = np.asarray(batch, dtype=np.float64)
    pattern = sfa_pattern(batch.shape[-1], l, m, eps, **kw)
    return apply_additive(batch, pattern, SFASpec(l, m, eps))


# -- PGD ----------------------------------------------------------------------

def _input_grad(model, x, y):
    if callable(model):
        return model(x, y)
    return nn.input_gradient(model, x, y)


def pgd(model, batch, labels, eps: float, alpha: float = 0.01, iters: int = 40,
        init_radius: float = 2.0 / 255.0, rng=None, chunk: int = 500) -> AttackResult:
    """L-infinity PGD on the eval-mode loss.

    Each iteration takes a signed-gradient step, projects onto the ``eps``
    ball around the clean batch, then clips to [0, 1]. ``model`` is either
    :class:`~absum.nn.ModelParams` or a callable ``(x, y) -> dloss/dx``.
    """
    spec = PGDSpec(eps, alpha, iters, init_radius)
    x0 = np.asarray(batch, dtype=np.float64)
    labels = np.asarray(labels)
    if not callable(model):
        nn._check_batch(model, x0)
    if init_radius > 0:
        if rng is None:
            raise ValueError("a random start needs an rng")
        start = x0 + rng.uniform(-init_radius, init_radius, size=x0.shape)
    else:
        start = x0.copy()
    lo = np.maximum(x0 - eps, 0.0)
    hi = np.minimum(x0 + eps, 1.0)
    x = np.clip(start, lo, hi)
    for s in range(0, x0.shape[0], chunk):
        sl = slice(s, s + chunk)
        xs = x[sl]
        for _ in range(iters):
            g = _input_grad(model, xs, labels[sl])
            xs = np.clip(xs + alpha * np.sign(g), lo[sl], hi[sl])
        x[sl] = xs
    return AttackResult(x, x - x0, spec)


def accuracy(model, batch, labels) -> float:
    """Percent of ``labels`` recovered by eval-mode predictions."""
    pred = nn.predict(model, batch)
    return 100.0 * float(np.mean(pred == np.asarray(labels)))


def transfer_attack(substitute, target, batch, labels, pgd_spec: PGDSpec, rng) -> float:
    """Accuracy of ``target`` on PGD examples crafted against ``substitute``."""
    adv = pgd(substitute, batch, labels, pgd_spec.eps, pgd_spec.alpha, pgd_spec.iters,
              pgd_spec.init_radius, rng)
    return accuracy(target, adv.perturbed, labels)


# -- frequency filtering ------------------------------------------------------

def radial_mask(n: int, radius: float) -> np.ndarray:
    """True where a centered-spectrum bin lies within ``radius`` of ``(n//2, n//2)``."""
    idx = np.arange(n) - n // 2
    dist = np.sqrt(idx[:, None] ** 2 + idx[None, :] ** 2)
    return dist <= radius


def frequency_split(batch, radius: float) -> tuple[np.ndarray, np.ndarray]:
    """Low- and high-frequency reconstructions (real part, unclipped)."""
    batch = np.asarray(batch, dtype=np.float64)
    n = batch.shape[-1]
    z = fftshift(dft2(batch))
    mask = radial_mask(n, radius)
    low = idft2(ifftshift(z * mask)).real
    high = idft2(ifftshift(z * ~mask)).real
    return low, high


def high_frequency_attack(batch, radius: float | None = None) -> AttackResult:
    """Keep only the frequencies within ``radius`` (default: half the image width)."""
    batch = np.asarray(batch, dtype=np.float64)
    if radius is None:
        radius = batch.shape[-1] / 2
    low, _ = frequency_split(batch, radius)
    out = np.clip(low, 0.0, 1.0)
    return AttackResult(out, out - batch, HighFreqSpec(radius))


def high_pass_filter(batch, radius: float | None = None) -> AttackResult:
    """Drop the frequencies within ``radius``; the complement of the low-pass attack."""
    batch = np.asarray(batch, dtype=np.float64)
    if radius is None:
        radius = batch.shape[-1] / 2
    _, high = frequency_split(batch, radius)
    out = np.clip(high, 0.0, 1.0)
    return AttackResult(out, out - batch, HighPassSpec(radius))
