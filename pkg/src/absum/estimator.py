"""scikit-learn wrappers around the digit CNN and the input-space attacks.

Images may be passed as ``(N, 784)``, ``(N, 28, 28)`` or ``(N, 1, 28, 28)``
arrays with pixels in [0, 1]; transformers return the layout they received.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import nn
from .attacks import PGDSpec, high_frequency_attack, high_pass_filter, sfa
from .regularize import RegularizerConfig
from .train import TrainConfig, train

SIDE = 28


def as_images(X) -> tuple[np.ndarray, tuple]:
    """Validate ``X`` and return it as (N, 1, 28, 28) plus the original shape."""
    X = check_array(X, allow_nd=True, dtype=np.float64)
    shape = X.shape
    if X.ndim == 2 and shape[1] == SIDE * SIDE:
        out = X.reshape(-1, 1, SIDE, SIDE)
    elif X.ndim == 3 and shape[1:] == (SIDE, SIDE):
        out = X[:, None]
    elif X.ndim == 4 and shape[1:] == (1, SIDE, SIDE):
        out = X
    else:
        raise ValueError(f"expected 28x28 single-channel images, got shape {shape}")
    if out.min() < 0.0 or out.max() > 1.0:
        raise ValueError("pixel values must lie in [0, 1]")
    return out, shape


class AbsumCNNClassifier(ClassifierMixin, BaseEstimator):
    """Two-conv digit CNN trained with proximal momentum SGD.

    ``method`` is one of ``none``, ``absum``, ``l1``, ``wd``, ``snc``; ``lam``
    is the regularization weight (``sigma_max`` for SNC). Setting
    ``adversarial_eps`` trains on PGD examples of that radius, reached by a
    linear ramp over the first ``adv_ramp_epochs`` epochs.
    """

    def __init__(self, method="absum", lam=1e-2, epochs=10, batch_size=64, lr=0.01,
                 momentum=0.5, sigma_max=1.0, snc_every=100, adversarial_eps=None,
                 adv_ramp_epochs=0.0, random_state=0):
        self.method = method
        self.lam = lam
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.momentum = momentum
        self.sigma_max = sigma_max
        self.snc_every = snc_every
        self.adversarial_eps = adversarial_eps
        self.adv_ramp_epochs = adv_ramp_epochs
        self.random_state = random_state

    def _train_config(self) -> TrainConfig:
        reg = RegularizerConfig(method=self.method, lam=self.lam, sigma_max=self.sigma_max,
                                snc_every=self.snc_every)
        adv = None if self.adversarial_eps is None else PGDSpec(eps=self.adversarial_eps)
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
                           momentum=self.momentum, seed=int(self.random_state or 0),
                           regularizer=reg, adversarial=adv,
                           adv_ramp_epochs=self.adv_ramp_epochs)

    def fit(self, X, y):
        images, shape = as_images(X)
        y = np.asarray(y)
        if y.ndim != 1 or y.shape[0] != images.shape[0]:
            raise ValueError(f"y must be 1-D with {images.shape[0]} entries")
        self.classes_, encoded = np.unique(y, return_inverse=True)
        if len(self.classes_) > nn.N_CLASSES:
            raise ValueError(f"at most {nn.N_CLASSES} classes supported, got {len(self.classes_)}")
        self.params_, self.trace_ = train(self._train_config(), images, encoded)
        self.n_features_in_ = int(np.prod(shape[1:]))
        return self

    def _logits(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        images, _ = as_images(X)
        out = []
        for s in range(0, images.shape[0], 1000):
            logits, _, _ = nn.forward(self.params_, images[s:s + 1000])
            out.append(logits)
        return np.concatenate(out)[:, : len(self.classes_)]

    def predict_proba(self, X) -> np.ndarray:
        z = self._logits(X)
        z = z - z.max(axis=1, keepdims=True)
        p = np.exp(z)
        return p / p.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        idx = self._logits(X).argmax(axis=1)
        return self.classes_[idx]


class _ImageTransformer(TransformerMixin, BaseEstimator):
    # stateless: fit only records the input width

    def fit(self, X, y=None):
        _, shape = as_images(X)
        self.n_features_in_ = int(np.prod(shape[1:]))
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        images, shape = as_images(X)
        return self._apply(images).reshape(shape)


class SFATransformer(_ImageTransformer):
    """Adds the single-Fourier-mode perturbation ``(l, m)`` of L-inf size ``eps``."""

    def __init__(self, l=0, m=0, eps=80 / 255):
        self.l = l
        self.m = m
        self.eps = eps

    def _apply(self, images):
        return sfa(images, self.l, self.m, self.eps).perturbed


class HighFrequencyFilter(_ImageTransformer):
    """Radial DFT filter; ``keep="low"`` is the high-frequency attack."""

    def __init__(self, radius=None, keep="low"):
        self.radius = radius
        self.keep = keep

    def _apply(self, images):
        if self.keep == "low":
            return high_frequency_attack(images, self.radius).perturbed
        if self.keep == "high":
            return high_pass_filter(images, self.radius).perturbed
        raise ValueError(f"keep must be 'low' or 'high', got {self.keep!r}")
