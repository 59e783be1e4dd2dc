import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from absum.circulant import (build_circulant, circular_conv, embed, frequency_matrices,
                             frequency_norms, frobenius_norm_circulant, induced_inf_norm,
                             layer_spectral_norm, singular_values_dft, snc_clip,
                             spectral_norm, unvec, vec)
from oracles import circulant_by_columns, naive_circular_conv


def test_circulant_matches_column_by_column_construction():
    rng = np.random.default_rng(0)
    for h, n in [(1, 3), (2, 4), (3, 5), (3, 3)]:
        k = rng.normal(size=(h, h))
        assert np.allclose(build_circulant(k, n), circulant_by_columns(k, n))


def test_circulant_acts_as_circular_convolution():
    rng = np.random.default_rng(1)
    k = rng.normal(size=(3, 3))
    x = rng.normal(size=(6, 6))
    y = unvec(build_circulant(k, 6) @ vec(x), 6)
    assert np.allclose(y, naive_circular_conv(k, x))
    assert np.allclose(circular_conv(k, x), y)


def test_circulant_entry_formula():
    k = np.arange(9.0).reshape(3, 3)
    a = build_circulant(k, 4)
    emb = embed(k, 4)
    n = 4
    for m in range(n):
        for l in range(n):
            for j in range(n):
                for b in range(n):
                    assert a[m * n + l, j * n + b] == emb[(b - l) % n, (j - m) % n]


def test_vec_is_column_stacking():
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert vec(x).tolist() == [1.0, 3.0, 2.0, 4.0]
    assert np.array_equal(unvec(vec(x), 2), x)


def test_filter_larger_than_map_rejected():
    with pytest.raises(ValueError):
        build_circulant(np.ones((5, 5)), 4)


def test_all_ones_2x2_on_2x2():
    # A has all entries 1 -> singular values {4, 0, 0, 0}
    k = np.ones((2, 2))
    assert np.allclose(build_circulant(k, 2), np.ones((4, 4)))
    assert np.allclose(sorted(singular_values_dft(k, 2)), [0, 0, 0, 4])


def test_identity_filter():
    k = np.array([[1.0]])
    assert np.allclose(build_circulant(k, 4), np.eye(16))
    assert np.allclose(singular_values_dft(k, 4), 1.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(0, 4), st.integers(0, 2**31 - 1))
def test_norm_chain(h, extra, seed):
    n = h + extra
    k = np.random.default_rng(seed).normal(size=(h, h))
    two = spectral_norm(k, n)
    assert two <= np.abs(k).sum() + 1e-9
    assert np.isclose(induced_inf_norm(k), np.abs(k).sum())
    assert np.isclose(frobenius_norm_circulant(k, n), n * np.sqrt((k ** 2).sum()))
    assert np.isclose(np.linalg.norm(build_circulant(k, n), np.inf), np.abs(k).sum())


def test_same_sign_filter_attains_inf_norm():
    k = np.abs(np.random.default_rng(2).normal(size=(3, 3)))
    assert np.isclose(spectral_norm(k, 6), k.sum())


def test_frequency_matrices_match_per_pair_dft():
    rng = np.random.default_rng(3)
    bank = rng.normal(size=(4, 3, 3, 3))
    fm = frequency_matrices(bank, 6)
    assert fm.shape == (6, 6, 4, 3)
    for o in range(4):
        for i in range(3):
            assert np.allclose(fm[:, :, o, i], np.fft.fft2(embed(bank[o, i], 6)))


def test_single_channel_layer_norm_equals_filter_norm():
    k = np.random.default_rng(4).normal(size=(3, 3))
    assert np.isclose(layer_spectral_norm(k[None, None], 8), spectral_norm(k, 8))
    assert np.isclose(frequency_norms(k[None, None], 8).max(), spectral_norm(k, 8))


def test_snc_clip_known_case():
    # all-ones 2x2 on n=2 has one nonzero singular value 4; clipping to 2 halves the filter
    out = snc_clip(np.ones((1, 1, 2, 2)), 2, 2.0)
    assert np.allclose(out, 0.5 * np.ones((1, 1, 2, 2)))


def test_snc_clip_untruncated_bounds_singular_values():
    bank = np.random.default_rng(5).normal(size=(3, 2, 3, 3))
    out = snc_clip(bank, 6, 0.7, truncate=False)
    assert out.shape == (3, 2, 6, 6)
    assert frequency_norms(out, 6).max() <= 0.7 + 1e-9
    assert np.allclose(snc_clip(out, 6, 0.7, truncate=False), out)


def test_snc_clip_noop_below_threshold():
    bank = 0.01 * np.random.default_rng(6).normal(size=(2, 2, 3, 3))
    assert np.allclose(snc_clip(bank, 8, 10.0), bank)


def test_snc_clip_truncated_shape():
    bank = np.random.default_rng(7).normal(size=(2, 2, 3, 3))
    assert snc_clip(bank, 8, 0.5).shape == bank.shape
