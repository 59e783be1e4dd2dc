import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from absum import nn
from absum.attacks import (accuracy, apply_additive, canonical_pair, conjugate_pair,
                           frequency_split, high_frequency_attack, high_pass_filter, pgd,
                           radial_mask, sfa, sfa_pattern, sfa_raw, transfer_attack)


@pytest.mark.parametrize("n", [4, 8, 28, 32])
def test_sfa_raw_is_real(n):
    worst = max(np.abs(sfa_raw(n, l, m, 1.0).imag).max() for l in range(n) for m in range(n))
    assert worst < 1e-12


def test_sfa_raw_equals_twice_cos_plus_sin():
    n, l, m = 8, 3, 5
    a, b = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    theta = -2 * np.pi * (l * b + m * a) / n  # column-stacked Kronecker: row index pairs with m
    assert np.allclose(sfa_raw(n, l, m, 1.0).real, 2 * (np.cos(theta) - np.sin(theta)))


@pytest.mark.parametrize("n", [4, 8, 28])
def test_sfa_pattern_conjugate_symmetry(n):
    for l in range(n):
        for m in range(n):
            lc, mc = conjugate_pair(n, l, m)
            assert np.array_equal(sfa_pattern(n, l, m, 0.1), sfa_pattern(n, lc, mc, 0.1))


def test_literal_patterns_of_a_conjugate_pair_differ_only_by_phase():
    # without canonicalization the pair gives distinct patterns with equal spectra
    a = sfa_pattern(8, 1, 2, 0.1, canonical=False)
    b = sfa_pattern(8, 7, 6, 0.1, canonical=False)
    assert not np.allclose(a, b)
    assert np.allclose(np.abs(np.fft.fft2(a)), np.abs(np.fft.fft2(b)))


def test_canonical_pair():
    assert canonical_pair(8, 7, 6) == (1, 2)
    assert canonical_pair(8, 1, 2) == (1, 2)
    assert canonical_pair(8, 4, 4) == (4, 4)


def test_dc_pattern_is_constant_eps():
    assert np.allclose(sfa_pattern(4, 0, 0, 0.1), 0.1)
    assert np.allclose(sfa_pattern(4, 0, 0, 0.1, normalize=False), 0.2)


def test_single_axis_pattern_is_striped():
    p = sfa_pattern(28, 0, 8, 0.3)
    assert np.linalg.matrix_rank(p) == 1
    assert np.allclose(p, p[:, :1]) or np.allclose(p, p[:1, :])


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 32).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, n - 1),
                                                       st.integers(0, n - 1))),
       st.floats(0.01, 1.0))
def test_sfa_pattern_linf_equals_eps(nlm, eps):
    n, l, m = nlm
    assert np.isclose(np.abs(sfa_pattern(n, l, m, eps)).max(), eps)


def test_sfa_rejects_out_of_range():
    with pytest.raises(ValueError):
        sfa_pattern(4, 4, 0, 0.1)


def test_apply_additive_clip_rules():
    rng = np.random.default_rng(0)
    x = rng.uniform(size=(3, 1, 8, 8))
    assert np.array_equal(apply_additive(x, np.zeros((8, 8))).perturbed, x)
    ones = np.ones((1, 1, 8, 8))
    assert np.array_equal(apply_additive(ones, np.full((8, 8), 0.2)).perturbed, ones)
    pat = sfa_pattern(8, 2, 3, 0.3)
    res = apply_additive(x, pat)
    raw = x + pat
    inside = (raw >= 0) & (raw <= 1)
    assert res.perturbed.min() >= 0 and res.perturbed.max() <= 1
    assert np.array_equal(res.perturbed[inside], raw[inside])
    assert np.allclose(res.perturbation, res.perturbed - x)


def test_sfa_adds_same_pattern_to_every_image():
    x = np.full((2, 1, 8, 8), 0.5)
    out = sfa(x, 1, 3, 0.1)
    assert np.allclose(out.perturbation[0], out.perturbation[1])
    assert out.spec.l == 1 and out.spec.eps == 0.1


def _linear_grad(w):
    # d/dx of the logistic loss of a single linear unit with label 1: -sigmoid(-w.x) * w
    def grad(x, y):
        z = (x * w).sum(axis=(1, 2, 3), keepdims=True)
        return -w / (1 + np.exp(z))
    return grad


def test_pgd_reaches_analytic_worst_case_in_one_step():
    rng = np.random.default_rng(1)
    w = rng.normal(size=(1, 1, 6, 6))
    x0 = rng.uniform(0.3, 0.7, size=(4, 1, 6, 6))
    adv = pgd(_linear_grad(w), x0, np.ones(4), eps=0.2, alpha=0.25, iters=1, init_radius=0.0)
    assert np.allclose(adv.perturbed, x0 - 0.2 * np.sign(w))


def test_pgd_trivial_cases():
    x0 = np.random.default_rng(2).uniform(size=(3, 1, 6, 6))
    grad = _linear_grad(np.ones((1, 1, 6, 6)))
    assert np.array_equal(pgd(grad, x0, np.ones(3), 0.3, iters=0, init_radius=0.0).perturbed, x0)
    res = pgd(grad, x0, np.ones(3), 0.0, iters=5, rng=np.random.default_rng(0))
    assert np.array_equal(res.perturbed, x0)
    with pytest.raises(ValueError):
        pgd(grad, x0, np.ones(3), 0.3, iters=1)  # random start without rng


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.0, 0.5), st.integers(0, 6))
def test_pgd_constraints_hold(seed, eps, iters):
    rng = np.random.default_rng(seed)
    w = rng.normal(size=(1, 1, 6, 6))
    x0 = rng.uniform(size=(5, 1, 6, 6))
    res = pgd(_linear_grad(w), x0, np.ones(5), eps, alpha=0.07, iters=iters, rng=rng)
    assert np.abs(res.perturbed - x0).max() <= eps + 1e-12
    assert res.perturbed.min() >= 0 and res.perturbed.max() <= 1


def test_pgd_on_network_lowers_accuracy_and_respects_ball():
    rng = np.random.default_rng(3)
    params = nn.init_params(rng, 0.1, 0.3)
    x = rng.uniform(size=(20, 1, 28, 28)) * 0.3
    y = nn.predict(params, x)  # labels the model gets right by construction
    res = pgd(params, x, y, 0.1, alpha=0.02, iters=10, rng=rng, chunk=7)
    assert np.abs(res.perturbation).max() <= 0.1 + 1e-12
    assert accuracy(params, res.perturbed, y) < 100.0


def test_transfer_self_equals_whitebox_and_zero_eps_is_clean():
    from absum.attacks import PGDSpec
    rng = np.random.default_rng(4)
    params = nn.init_params(rng, 0.1, 0.3)
    x = rng.uniform(size=(10, 1, 28, 28)) * 0.3
    y = rng.integers(0, 10, size=10)
    spec = PGDSpec(eps=0.1, alpha=0.02, iters=5)
    white = accuracy(params, pgd(params, x, y, 0.1, 0.02, 5, spec.init_radius,
                                 np.random.default_rng(9)).perturbed, y)
    assert transfer_attack(params, params, x, y, spec, np.random.default_rng(9)) == white
    zero = PGDSpec(eps=0.0, alpha=0.02, iters=5)
    assert transfer_attack(params, params, x, y, zero, rng) == accuracy(params, x, y)


def test_radial_mask_geometry():
    m = radial_mask(8, 1.0)
    assert m[4, 4] and m[3, 4] and m[4, 5] and not m[3, 3]
    assert radial_mask(28, 28 * np.sqrt(2) / 2).all()


def test_low_and_high_pass_partition_the_image():
    rng = np.random.default_rng(5)
    for _ in range(100):
        x = rng.uniform(size=(1, 1, 28, 28))
        low, high = frequency_split(x, rng.uniform(0, 20))
        assert np.abs(low + high - x).max() < 1e-9


def test_full_mask_is_identity_and_constant_image_survives():
    x = np.random.default_rng(6).uniform(size=(2, 1, 28, 28))
    low, _ = frequency_split(x, 28 * np.sqrt(2) / 2)
    assert np.abs(low - x).max() < 1e-9
    const = np.full((1, 1, 28, 28), 0.4)
    assert np.allclose(high_frequency_attack(const, 1.0).perturbed, const)
    assert np.allclose(high_pass_filter(const, 1.0).perturbed, 0.0)


def test_high_frequency_attack_default_radius():
    x = np.random.default_rng(7).uniform(size=(1, 1, 28, 28))
    assert high_frequency_attack(x).spec.radius == 14
