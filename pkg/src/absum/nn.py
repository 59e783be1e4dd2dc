"""Two-layer CNN for 28x28 grayscale digits with hand-written backprop.

Layer order::

    standardize -> conv(1->10, 5x5, valid) -> maxpool2 -> ReLU
                -> conv(10->20, 5x5, valid) -> dropout -> maxpool2 -> ReLU
                -> flatten(320) -> dense(320->50) -> ReLU -> dropout
                -> dense(50->10) -> softmax cross-entropy

Inputs are raw pixels in [0, 1]; standardization with frozen scalar
statistics happens inside the forward pass so that input gradients see it.
Dropout is inverted (scaled by ``1/(1-p)`` in train mode) and per element.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

KERNEL = 5
DROP_P = 0.5
CONV1_OUT = 10
CONV2_OUT = 20
HIDDEN = 50
N_CLASSES = 10
IMAGE_SIDE = 28
FLAT = CONV2_OUT * 4 * 4

TRAINABLE = ("conv1_w", "conv1_b", "conv2_w", "conv2_b", "fc1_w", "fc1_b", "fc2_w", "fc2_b")
CONV_LAYERS = ("conv1_w", "conv2_w")


@dataclass
class ModelParams:
    """Network weights plus the frozen standardization statistics.

    Convolution banks are stored as ``(c_out, c_in, h, h)``; dense weights as
    ``(fan_in, fan_out)``.
    """

    conv1_w: np.ndarray
    conv1_b: np.ndarray
    conv2_w: np.ndarray
    conv2_b: np.ndarray
    fc1_w: np.ndarray
    fc1_b: np.ndarray
    fc2_w: np.ndarray
    fc2_b: np.ndarray
    mean: float = 0.0
    std: float = 1.0

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in TRAINABLE}

    def copy(self) -> ModelParams:
        kw = {name: arr.copy() for name, arr in self.arrays().items()}
        return ModelParams(**kw, mean=self.mean, std=self.std)

    def replace(self, **arrays) -> ModelParams:
        kw = self.arrays()
        kw.update(arrays)
        return ModelParams(**kw, mean=self.mean, std=self.std)

    def conv_banks(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in CONV_LAYERS}


PARAM_SHAPES = {
    "conv1_w": (CONV1_OUT, 1, KERNEL, KERNEL),
    "conv1_b": (CONV1_OUT,),
    "conv2_w": (CONV2_OUT, CONV1_OUT, KERNEL, KERNEL),
    "conv2_b": (CONV2_OUT,),
    "fc1_w": (FLAT, HIDDEN),
    "fc1_b": (HIDDEN,),
    "fc2_w": (HIDDEN, N_CLASSES),
    "fc2_b": (N_CLASSES,),
}
_FAN_IN = {
    "conv1_w": 1 * KERNEL * KERNEL,
    "conv2_w": CONV1_OUT * KERNEL * KERNEL,
    "fc1_w": FLAT,
    "fc2_w": HIDDEN,
}


def init_params(rng: np.random.Generator, mean: float = 0.0, std: float = 1.0) -> ModelParams:
    """Weights uniform in +-sqrt(6 / fan_in), biases zero."""
    kw = {}
    for name in TRAINABLE:
        shape = PARAM_SHAPES[name]
        if name.endswith("_b"):
            kw[name] = np.zeros(shape)
        else:
            bound = np.sqrt(6.0 / _FAN_IN[name])
            kw[name] = rng.uniform(-bound, bound, size=shape)
    return ModelParams(**kw, mean=float(mean), std=float(std))


def zero_params(mean: float = 0.0, std: float = 1.0) -> ModelParams:
    return ModelParams(**{k: np.zeros(s) for k, s in PARAM_SHAPES.items()}, mean=mean, std=std)


# -- layer primitives ---------------------------------------------------------

def im2col(x: np.ndarray, h: int) -> np.ndarray:
    """Patches of ``x`` (B, C, H, W) as a contiguous (B, Ho, Wo, C*h*h) array."""
    bsz, c = x.shape[:2]
    win = sliding_window_view(x, (h, h), axis=(2, 3))  # B,C,Ho,Wo,h,h
    ho, wo = win.shape[2:4]
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(bsz, ho, wo, c * h * h)


def conv2d_valid(x: np.ndarray, w: np.ndarray, b: np.ndarray, cols: np.ndarray | None = None):
    """Cross-correlation with stride 1 and no padding.

    ``x`` is (B, C, H, W), ``w`` is (O, C, h, h); returns the (B, O, H-h+1,
    W-h+1) output and the im2col patches for reuse in the backward pass.
    """
    if cols is None:
        cols = im2col(x, w.shape[-1])
    bsz, ho, wo, k = cols.shape
    out = (cols.reshape(-1, k) @ w.reshape(w.shape[0], -1).T).reshape(bsz, ho, wo, -1)
    return out.transpose(0, 3, 1, 2) + b[None, :, None, None], cols


def conv2d_valid_grads(cols, w, dout, in_shape, need_dx=True, need_dw=True):
    """Gradients of :func:`conv2d_valid` given upstream ``dout`` (B, O, Ho, Wo)."""
    o, c, h, _ = w.shape
    ho, wo = dout.shape[2:]
    dout_t = dout.transpose(0, 2, 3, 1).reshape(-1, o)  # (B*Ho*Wo, O)
    dw = db = dx = None
    if need_dw:
        dw = (dout_t.T @ cols.reshape(-1, c * h * h)).reshape(w.shape)
        db = dout.sum(axis=(0, 2, 3))
    if need_dx:
        # col2im: scatter each kernel offset's contribution back onto the input
        bsz = dout.shape[0]
        dout_o = dout.transpose(1, 0, 2, 3).reshape(o, -1)
        dcols = (w.reshape(o, -1).T @ dout_o).reshape(c, h, h, bsz, ho, wo)
        dx = np.zeros((c, bsz) + tuple(in_shape[2:]))
        for p in range(h):
            for q in range(h):
                dx[:, :, p:p + ho, q:q + wo] += dcols[:, p, q]
        dx = dx.transpose(1, 0, 2, 3)
    return dx, dw, db


def maxpool2(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """2x2 max pooling, stride 2. Returns output and the flat argmax (0..3)
    inside each window; ties go to the first maximum in row-major order."""
    bsz, c, hgt, wid = x.shape
    blocks = x.reshape(bsz, c, hgt // 2, 2, wid // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    blocks = blocks.reshape(bsz, c, hgt // 2, wid // 2, 4)
    idx = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]
    return out, idx


def maxpool2_backward(dout: np.ndarray, idx: np.ndarray) -> np.ndarray:
    bsz, c, ho, wo = dout.shape
    blocks = np.zeros((bsz, c, ho, wo, 4))
    np.put_along_axis(blocks, idx[..., None], dout[..., None], axis=-1)
    blocks = blocks.reshape(bsz, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return blocks.reshape(bsz, c, ho * 2, wo * 2)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def softmax_xent(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1))
    logp = shifted - logsum[:, None]
    n = logits.shape[0]
    loss = -logp[np.arange(n), labels].mean()
    dlogits = np.exp(logp)
    dlogits[np.arange(n), labels] -= 1.0
    return float(loss), dlogits / n


def _dropout_mask(rng, shape, p):
    return (rng.random(shape) >= p) / (1.0 - p)


# -- forward / backward -------------------------------------------------------

@dataclass
class ForwardCache:
    x: np.ndarray
    labels: np.ndarray | None
    cols1: np.ndarray
    cols2: np.ndarray
    p1_idx: np.ndarray
    p1: np.ndarray
    a1: np.ndarray
    mask2: np.ndarray | None
    p2_idx: np.ndarray
    p2: np.ndarray
    flat: np.ndarray
    h1: np.ndarray
    mask3: np.ndarray | None
    h1d: np.ndarray
    dlogits: np.ndarray | None
    params_id: int = field(default=0)


def _check_batch(params: ModelParams, x: np.ndarray) -> None:
    if x.ndim != 4 or x.shape[1:] != (params.conv1_w.shape[1], IMAGE_SIDE, IMAGE_SIDE):
        raise ValueError(
            f"expected batch of shape (B, {params.conv1_w.shape[1]}, {IMAGE_SIDE}, {IMAGE_SIDE}), "
            f"got {x.shape}"
        )


def forward(params: ModelParams, x, labels=None, mode="eval", rng=None):
    """Run the network.

    Returns ``(logits, loss, cache)``; ``loss`` is None when no labels are
    given. ``mode='train'`` enables dropout and requires ``rng``.
    """
    x = np.asarray(x, dtype=np.float64)
    _check_batch(params, x)
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    train = mode == "train"
    if train and rng is None:
        raise ValueError("train mode needs an rng for dropout")

    z0 = (x - params.mean) / params.std
    c1, cols1 = conv2d_valid(z0, params.conv1_w, params.conv1_b)
    p1, p1_idx = maxpool2(c1)
    a1 = relu(p1)
    c2, cols2 = conv2d_valid(a1, params.conv2_w, params.conv2_b)
    mask2 = _dropout_mask(rng, c2.shape, DROP_P) if train else None
    if mask2 is not None:
        c2 = c2 * mask2
    p2, p2_idx = maxpool2(c2)
    flat = relu(p2).reshape(x.shape[0], -1)
    h1 = relu(flat @ params.fc1_w + params.fc1_b)
    mask3 = _dropout_mask(rng, h1.shape, DROP_P) if train else None
    h1d = h1 * mask3 if mask3 is not None else h1
    logits = h1d @ params.fc2_w + params.fc2_b

    loss = dlogits = None
    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (x.shape[0],):
            raise ValueError(f"labels shape {labels.shape} does not match batch {x.shape[0]}")
        if labels.size and (labels.min() < 0 or labels.max() >= N_CLASSES):
            raise ValueError("labels must lie in 0..9")
        loss, dlogits = softmax_xent(logits, labels)

    cache = ForwardCache(
        x=x, labels=labels, cols1=cols1, cols2=cols2, p1_idx=p1_idx, p1=p1, a1=a1, mask2=mask2,
        p2_idx=p2_idx, p2=p2, flat=flat, h1=h1, mask3=mask3, h1d=h1d,
        dlogits=dlogits, params_id=id(params),
    )
    return logits, loss, cache


def backward(params: ModelParams, cache: ForwardCache, need_params=True, need_input=False):
    """Gradients of the cached mean loss.

    Returns a dict keyed like :data:`TRAINABLE` (when ``need_params``) and, if
    ``need_input``, an extra ``"x"`` entry holding d loss / d raw pixels.
    """
    if cache.dlogits is None:
        raise ValueError("cache has no loss; call forward with labels")
    if cache.params_id != id(params):
        raise ValueError("stale cache: produced by a different parameter object")
    grads = {}
    d = cache.dlogits
    if need_params:
        grads["fc2_w"] = cache.h1d.T @ d
        grads["fc2_b"] = d.sum(axis=0)
    dh = d @ params.fc2_w.T
    if cache.mask3 is not None:
        dh = dh * cache.mask3
    dh = dh * (cache.h1 > 0)
    if need_params:
        grads["fc1_w"] = cache.flat.T @ dh
        grads["fc1_b"] = dh.sum(axis=0)
    dflat = (dh @ params.fc1_w.T) * (cache.flat > 0)
    dp2 = dflat.reshape(cache.p2.shape)
    dc2 = maxpool2_backward(dp2, cache.p2_idx)
    if cache.mask2 is not None:
        dc2 = dc2 * cache.mask2
    da1, dw2, db2 = conv2d_valid_grads(cache.cols2, params.conv2_w, dc2, cache.a1.shape,
                                       need_dw=need_params)
    if need_params:
        grads["conv2_w"], grads["conv2_b"] = dw2, db2
    dp1 = da1 * (cache.p1 > 0)
    dc1 = maxpool2_backward(dp1, cache.p1_idx)
    dz0, dw1, db1 = conv2d_valid_grads(cache.cols1, params.conv1_w, dc1, cache.x.shape,
                                       need_dx=need_input, need_dw=need_params)
    if need_params:
        grads["conv1_w"], grads["conv1_b"] = dw1, db1
    if need_input:
        grads["x"] = dz0 / params.std
    return grads


def loss_and_grads(params, x, labels, mode="train", rng=None):
    _, loss, cache = forward(params, x, labels, mode=mode, rng=rng)
    return loss, backward(params, cache)


def input_gradient(params: ModelParams, x, labels) -> np.ndarray:
    """d(mean eval-mode loss) / d(raw input pixels)."""
    _, _, cache = forward(params, x, labels, mode="eval")
    return backward(params, cache, need_params=False, need_input=True)["x"]


def predict(params: ModelParams, x, batch_size: int = 1000) -> np.ndarray:
    """Eval-mode argmax; ``np.argmax`` already breaks ties toward the lowest index."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty(x.shape[0], dtype=np.int64)
    for start in range(0, x.shape[0], batch_size):
        logits, _, _ = forward(params, x[start:start + batch_size], mode="eval")
        out[start:start + batch_size] = logits.argmax(axis=1)
    return out
