import numpy as np
import pytest

from absum import nn
from gradcheck import check_seed


@pytest.mark.parametrize("mode", ["train", "eval"])
@pytest.mark.parametrize("seed", range(20))
def test_gradients_match_finite_differences(seed, mode):
    errors = check_seed(seed, mode=mode)
    assert set(errors) == set(nn.TRAINABLE) | {"x"}
    assert max(errors.values()) < 1e-4, errors


def test_shapes_and_parameter_count():
    params = nn.init_params(np.random.default_rng(0))
    assert {k: v.shape for k, v in params.arrays().items()} == nn.PARAM_SHAPES
    assert sum(v.size for v in params.arrays().values()) == 21840
    logits, loss, _ = nn.forward(params, np.zeros((4, 1, 28, 28)))
    assert logits.shape == (4, 10) and loss is None


def test_init_bounds_and_zero_biases():
    params = nn.init_params(np.random.default_rng(1))
    assert np.abs(params.conv1_w).max() <= np.sqrt(6 / 25)
    assert np.abs(params.fc1_w).max() <= np.sqrt(6 / 320)
    assert all(not params.arrays()[k].any() for k in nn.TRAINABLE if k.endswith("_b"))


def test_zero_model_gives_uniform_softmax():
    params = nn.zero_params()
    x = np.random.default_rng(2).uniform(size=(5, 1, 28, 28))
    _, loss, _ = nn.forward(params, x, np.arange(5))
    assert np.isclose(loss, np.log(10))
    assert np.array_equal(nn.predict(params, x), np.zeros(5, dtype=int))


def test_softmax_xent_against_direct_formula():
    rng = np.random.default_rng(3)
    z = rng.normal(size=(6, 10)) * 5
    y = rng.integers(0, 10, size=6)
    loss, grad = nn.softmax_xent(z, y)
    p = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
    assert np.isclose(loss, -np.mean(np.log(p[np.arange(6), y])))
    onehot = np.eye(10)[y]
    assert np.allclose(grad, (p - onehot) / 6)


def test_softmax_xent_large_logits_stay_finite():
    loss, grad = nn.softmax_xent(np.array([[1000.0, 0.0]]), np.array([1]))
    assert np.isfinite(loss) and np.isfinite(grad).all()


def test_maxpool_ties_route_to_first_max():
    x = np.ones((1, 1, 2, 2))
    out, idx = nn.maxpool2(x)
    assert out[0, 0, 0, 0] == 1.0 and idx[0, 0, 0, 0] == 0
    back = nn.maxpool2_backward(np.ones((1, 1, 1, 1)), idx)
    assert back[0, 0].tolist() == [[1.0, 0.0], [0.0, 0.0]]


def test_conv_matches_direct_loop():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(2, 3, 7, 7))
    w = rng.normal(size=(4, 3, 3, 3))
    b = rng.normal(size=4)
    out, _ = nn.conv2d_valid(x, w, b)
    ref = np.zeros((2, 4, 5, 5))
    for n in range(2):
        for o in range(4):
            for i in range(5):
                for j in range(5):
                    ref[n, o, i, j] = np.sum(x[n, :, i:i + 3, j:j + 3] * w[o]) + b[o]
    assert np.allclose(out, ref)


def test_standardization_happens_inside_the_model():
    rng = np.random.default_rng(5)
    params = nn.init_params(rng, mean=0.2, std=0.5)
    shifted = params.replace()
    shifted.mean, shifted.std = 0.0, 1.0
    x = rng.uniform(size=(3, 1, 28, 28))
    a, _, _ = nn.forward(params, x)
    b, _, _ = nn.forward(shifted, (x - 0.2) / 0.5)
    assert np.allclose(a, b)


def test_eval_mode_is_deterministic_and_train_mode_needs_rng():
    params = nn.init_params(np.random.default_rng(6))
    x = np.random.default_rng(7).uniform(size=(2, 1, 28, 28))
    assert np.array_equal(nn.forward(params, x)[0], nn.forward(params, x)[0])
    with pytest.raises(ValueError):
        nn.forward(params, x, mode="train")
    with pytest.raises(ValueError):
        nn.forward(params, x, mode="test")


def test_dropout_is_inverted():
    mask = nn._dropout_mask(np.random.default_rng(8), (200000,), 0.5)
    assert set(np.unique(mask)) == {0.0, 2.0}
    assert abs(mask.mean() - 1.0) < 0.01


def test_bad_inputs_rejected():
    params = nn.init_params(np.random.default_rng(9))
    with pytest.raises(ValueError):
        nn.forward(params, np.zeros((2, 28, 28)))
    with pytest.raises(ValueError):
        nn.forward(params, np.zeros((2, 1, 28, 28)), np.array([0, 10]))
    with pytest.raises(ValueError):
        nn.forward(params, np.zeros((2, 1, 28, 28)), np.array([0]))


def test_backward_refuses_stale_or_lossless_cache():
    params = nn.init_params(np.random.default_rng(10))
    x = np.zeros((1, 1, 28, 28))
    _, _, cache = nn.forward(params, x)
    with pytest.raises(ValueError):
        nn.backward(params, cache)
    _, _, cache = nn.forward(params, x, np.array([3]))
    with pytest.raises(ValueError):
        nn.backward(params.copy(), cache)


def test_predict_batches_consistently():
    params = nn.init_params(np.random.default_rng(11))
    x = np.random.default_rng(12).uniform(size=(37, 1, 28, 28))
    assert np.array_equal(nn.predict(params, x, batch_size=5), nn.predict(params, x, batch_size=100))


def test_input_gradient_matches_backward():
    rng = np.random.default_rng(13)
    params = nn.init_params(rng, 0.1, 0.3)
    x = rng.uniform(size=(4, 1, 28, 28))
    y = rng.integers(0, 10, size=4)
    _, _, cache = nn.forward(params, x, y)
    full = nn.backward(params, cache, need_input=True)["x"]
    assert np.allclose(nn.input_gradient(params, x, y), full)
