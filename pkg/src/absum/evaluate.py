"""Robust-accuracy measurements and frequency analyses."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .attacks import (PGDSpec, accuracy, canonical_pair, high_frequency_attack,
                      high_pass_filter, pgd, sfa_pattern)
from .numeric import dft2, fftshift
from .train import TrainConfig, train


def _pct(correct: int, total: int) -> float:
    return round(100.0 * correct / total, 2)


@dataclass
class AttackGridReport:
    """SFA accuracy (percent) for every frequency pair ``(l, m)``."""

    cells: np.ndarray
    clean: float
    eps: float
    model_id: str = ""
    avg: float = field(init=False)
    min: float = field(init=False)
    max: float = field(init=False)

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=np.float64)
        self.avg = float(self.cells.mean())
        self.min = float(self.cells.min())
        self.max = float(self.cells.max())

    @property
    def argmin(self) -> tuple[int, int]:
        return tuple(int(i) for i in np.unravel_index(self.cells.argmin(), self.cells.shape))


def sfa_grid(params: nn.ModelParams, x, y, eps: float, model_id: str = "",
             batch_size: int = 1000) -> AttackGridReport:
    """Accuracy under SFA for all ``(l, m)`` in ``0..n-1``.

    Conjugate pairs get the same perturbation, so each is evaluated once.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    n = x.shape[-1]
    total = y.shape[0]
    clean = _pct(int(np.sum(nn.predict(params, x, batch_size) == y)), total)
    cells = np.full((n, n), np.nan)
    for l in range(n):
        for m in range(n):
            cl, cm = canonical_pair(n, l, m)
            if not np.isnan(cells[cl, cm]):
                cells[l, m] = cells[cl, cm]
                continue
            pattern = sfa_pattern(n, cl, cm, eps)
            pert = np.clip(x + pattern, 0.0, 1.0)
            cells[l, m] = _pct(int(np.sum(nn.predict(params, pert, batch_size) == y)), total)
            cells[cl, cm] = cells[l, m]
    return AttackGridReport(cells, clean, eps, model_id)


def pgd_sweep(params, x, y, eps_list, spec: PGDSpec = PGDSpec(), seed: int = 0) -> dict[float, float]:
    """White-box PGD accuracy at each budget; ``spec.eps`` is ignored."""
    out = {}
    for eps in eps_list:
        rng = np.random.default_rng(seed)
        adv = pgd(params, x, y, eps, spec.alpha, spec.iters, spec.init_radius, rng)
        out[float(eps)] = accuracy(params, adv.perturbed, y)
    return out


def high_frequency_accuracy(params, x, y, radius: float | None = None) -> float:
    return accuracy(params, high_frequency_attack(x, radius).perturbed, y)


def high_pass_accuracy(params, x, y, radius: float | None = None) -> float:
    return accuracy(params, high_pass_filter(x, radius).perturbed, y)


def raw_power_spectrum(perturbations) -> np.ndarray:
    """Mean ``|DFT|^2`` over batch and channels, DC moved to the center."""
    p = np.asarray(perturbations, dtype=np.float64)
    if p.ndim == 2:
        p = p[None, None]
    elif p.ndim == 3:
        p = p[:, None]
    power = np.abs(dft2(p)) ** 2
    return fftshift(power.mean(axis=(0, 1)))


def power_spectrum(perturbations) -> np.ndarray:
    """Centered mean power, ``log1p``-transformed and min-max scaled to [0, 1]."""
    logp = np.log1p(raw_power_spectrum(perturbations))
    lo, hi = logp.min(), logp.max()
    if hi == lo:
        return np.zeros_like(logp)
    return (logp - lo) / (hi - lo)


def benchmark_epoch(configs, x, y, runs: int = 3, epochs: int = 1, seed: int = 0,
                    warmup: int = 1) -> dict:
    """Mean wall time of one training epoch per regularizer config.

    Runs are interleaved across configs so slow drifts in machine load hit
    every config alike; ``warmup`` untimed rounds come first. Returns
    ``{label: {"mean": s, "runs": [...]}}``.
    """
    for _ in range(warmup):
        for cfg in configs:
            train(TrainConfig(epochs=1, seed=seed, regularizer=cfg), x[:256], y[:256])
    times = {cfg.label: [] for cfg in configs}
    for _ in range(runs):
        for cfg in configs:
            tc = TrainConfig(epochs=epochs, seed=seed, regularizer=cfg)
            t0 = time.perf_counter()
            train(tc, x, y)
            times[cfg.label].append((time.perf_counter() - t0) / epochs)
    return {k: {"mean": float(np.mean(v)), "runs": v} for k, v in times.items()}
