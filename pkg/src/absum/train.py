"""Proximal momentum-SGD training, optionally on PGD examples."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn
from .attacks import PGDSpec, pgd
from .regularize import RegularizerConfig, apply_regularizer

log = logging.getLogger(__name__)

# side of the input map each conv layer sees (used by the spectral norm clip)
CONV_MAP_SIZE = {"conv1_w": 28, "conv2_w": 12}


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 64
    lr: float = 0.01
    momentum: float = 0.5
    seed: int = 0
    regularizer: RegularizerConfig = field(default_factory=RegularizerConfig)
    adversarial: PGDSpec | None = None
    # epochs over which the adversarial eps grows linearly from 0 to its final value
    adv_ramp_epochs: float = 0.0

    def __post_init__(self):
        if isinstance(self.regularizer, dict):
            self.regularizer = RegularizerConfig(**self.regularizer)
        if isinstance(self.adversarial, dict):
            self.adversarial = PGDSpec(**self.adversarial)
        if self.epochs < 0 or self.batch_size < 1 or self.lr <= 0 or not 0 <= self.momentum < 1:
            raise ValueError(f"invalid training hyperparameters: {self}")
        if self.adv_ramp_epochs < 0:
            raise ValueError(f"adv_ramp_epochs must be non-negative, got {self.adv_ramp_epochs}")
        reg = self.regularizer
        if reg.method == "wd" and self.lr * 2 * reg.lam >= 1:
            raise ValueError("weight decay needs lr * 2 * lam < 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["regularizer"] = self.regularizer.to_dict()
        if not self.adv_ramp_epochs:
            # keeps hashes of configs written before the field existed
            del d["adv_ramp_epochs"]
        return d


@dataclass
class TrainTrace:
    """Per-epoch mean data loss (regularizer excluded) and wall time."""

    epoch_loss: list[float] = field(default_factory=list)
    epoch_time: list[float] = field(default_factory=list)
    params: nn.ModelParams | None = None

    @property
    def final_loss(self) -> float:
        return self.epoch_loss[-1] if self.epoch_loss else float("nan")


def momentum_step(params: dict, grads: dict, velocity: dict, lr: float, momentum: float):
    """Classical momentum: ``v <- mu*v - lr*g``; ``theta <- theta + v``.

    Works on dicts of arrays; returns new ``(params, velocity)`` dicts.
    """
    new_v = {k: momentum * velocity[k] - lr * grads[k] for k in grads}
    new_p = dict(params)
    for k, v in new_v.items():
        new_p[k] = params[k] + v
    return new_p, new_v


def standardization_stats(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=np.float64)
    return float(x.mean()), float(x.std())


def regularize_params(params: nn.ModelParams, reg: RegularizerConfig, lr: float,
                      iteration: int) -> nn.ModelParams:
    """Apply ``reg`` to both convolution banks (dense layers and biases untouched)."""
    if reg.method == "none":
        return params
    banks = {
        name: apply_regularizer(bank, reg, lr, iteration, map_size=CONV_MAP_SIZE[name])
        for name, bank in params.conv_banks().items()
    }
    return params.replace(**banks)


def train(config: TrainConfig, x, y, callback=None,
          step_callback=None) -> tuple[nn.ModelParams, TrainTrace]:
    """Train the digit CNN on raw [0, 1] images ``x`` (N, 1, 28, 28).

    Every optimizer step is followed by the configured regularizer update.
    ``callback(epoch, params, trace)`` runs after each epoch and
    ``step_callback(iteration, params)`` after each regularized step.
    Deterministic for a fixed ``config.seed``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.shape[0] == 0:
        raise ValueError("empty training set")
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"{x.shape[0]} images but {y.shape[0]} labels")

    init_seq, shuffle_seq, noise_seq = np.random.SeedSequence(config.seed).spawn(3)
    mean, std = standardization_stats(x)
    params = nn.init_params(np.random.default_rng(init_seq), mean, std)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    noise_rng = np.random.default_rng(noise_seq)
    velocity = {k: np.zeros_like(v) for k, v in params.arrays().items()}
    reg = config.regularizer
    trace = TrainTrace()
    iteration = 0
    steps_per_epoch = -(-x.shape[0] // config.batch_size)
    ramp_steps = config.adv_ramp_epochs * steps_per_epoch

    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        order = shuffle_rng.permutation(x.shape[0])
        losses = []
        for start in range(0, x.shape[0], config.batch_size):
            idx = order[start:start + config.batch_size]
            xb, yb = x[idx], y[idx]
            if config.adversarial is not None:
                a = config.adversarial
                eps = a.eps * min(1.0, iteration / ramp_steps) if ramp_steps else a.eps
                xb = pgd(params, xb, yb, eps, a.alpha, a.iters, a.init_radius, noise_rng).perturbed
            loss, grads = nn.loss_and_grads(params, xb, yb, mode="train", rng=noise_rng)
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite training loss in epoch {epoch + 1}")
            losses.append(loss * len(idx))
            new_arrays, velocity = momentum_step(params.arrays(), grads, velocity,
                                                 config.lr, config.momentum)
            params = params.replace(**new_arrays)
            iteration += 1
            params = regularize_params(params, reg, config.lr, iteration)
            if step_callback is not None:
                step_callback(iteration, params)
        trace.epoch_loss.append(float(np.sum(losses) / x.shape[0]))
        trace.epoch_time.append(time.perf_counter() - t0)
        log.info("epoch %d/%d loss=%.4f (%.1fs) %s", epoch + 1, config.epochs,
                 trace.epoch_loss[-1], trace.epoch_time[-1], reg.label)
        if callback is not None:
            callback(epoch, params, trace)
    trace.params = params
    return params, trace
