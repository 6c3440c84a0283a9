import math
from decimal import Decimal

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vdjscc import autodiff as ad
from vdjscc import token_select as ts
from vdjscc.autodiff import Tensor
from vdjscc.errors import ConfigError, DimensionError
from vdjscc.params import ParamStore


def selector(K=8, seed=0):
    store = ParamStore(seed)
    ts.init_selector(store, "sel", K)
    return store


def test_global_row_is_mean_of_local_rows():
    store = selector(16)
    s = Tensor(np.random.default_rng(0).normal(size=(2, 196, 16)))
    local, glob = ts.split_features(s, store, "sel")
    assert local.shape == (2, 196, 8) and glob.shape == (2, 1, 8)
    assert np.max(np.abs(glob.data - local.data.mean(axis=1, keepdims=True))) < 1e-12


def test_probabilities_in_open_unit_interval():
    store = selector()
    s = Tensor(np.random.default_rng(1).normal(size=(3, 10, 8)))
    p = ts.score_tokens(*ts.split_features(s, store, "sel"), store, "sel").data
    assert p.shape == (3, 10, 1)
    assert np.all((p > 0) & (p < 1))


def test_raising_raw_score_raises_probability():
    store = selector()
    local, glob = ts.split_features(Tensor(np.random.default_rng(2).normal(size=(1, 6, 8))), store, "sel")
    before = ts.score_tokens(local, glob, store, "sel").data.reshape(-1)
    logits = ts.score_logits(local, glob, store, "sel").data.reshape(-1)
    bumped = logits.copy()
    bumped[3] += 0.5
    p_new = 1 / (1 + np.exp(-bumped))
    assert p_new[3] > before[3]
    np.testing.assert_array_equal(np.delete(p_new, 3), np.delete(1 / (1 + np.exp(-logits)), 3))


def test_tie_break_prefers_lower_index():
    s = Tensor(np.arange(8.0).reshape(4, 2))
    res = ts.select(s, np.array([0.1, 0.9, 0.5, 0.5]), 0.5)
    assert res.mask.tolist() == [0, 1, 1, 0]
    assert res.kept_indices.tolist() == [1, 2]
    np.testing.assert_array_equal(res.kept_tokens.data, s.data[[1, 2]])


@pytest.mark.parametrize("gamma, M, k", [(1.0, 1568, 1568), (0.8, 1568, 1255), (0.5, 32, 16), (0.1, 5, 1), (0.3, 10, 3), (0.4, 305, 122)])
def test_keep_count(gamma, M, k):
    assert ts.keep_count(gamma, M) == k


@pytest.mark.parametrize("gamma", [0.0, -0.2, 1.01])
def test_gamma_out_of_range(gamma):
    with pytest.raises(ConfigError):
        ts.keep_count(gamma, 10)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.01, 1.0), st.integers(1, 400), st.integers(0, 2**31))
def test_mask_consistency(gamma, M, seed):
    rng = np.random.default_rng(seed)
    s = Tensor(rng.normal(size=(M, 2)))
    res = ts.select(s, rng.random(M), gamma)
    k = math.ceil(Decimal(repr(gamma)) * M)
    assert int(res.mask.sum()) == k
    assert res.kept_tokens.shape == (k, 2)
    assert np.all(np.diff(res.kept_indices) > 0)
    masked = ts.straight_through_mask(s, res.mask).data
    assert np.all(masked[res.mask == 0] == 0)
    np.testing.assert_array_equal(masked[res.mask == 1], s.data[res.mask == 1])


def test_straight_through_value_and_gradients():
    rng = np.random.default_rng(3)
    s = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    p = Tensor(rng.random(4), requires_grad=True)
    mask = np.array([1, 0, 1, 0])
    w = Tensor(rng.normal(size=(4, 3)))
    out = ts.straight_through_mask(s, mask, p)
    np.testing.assert_array_equal(out.data, s.data * mask[:, None])
    grads = ad.backward(ad.sum_all(out * w))
    np.testing.assert_array_equal(grads[s], w.data * mask[:, None])
    # d/dp_i of sum(s_i * w_i) through the estimator
    np.testing.assert_allclose(grads[p], (s.data * w.data).sum(axis=1), rtol=1e-12)


def test_kept_gradient_equals_unmasked_gradient():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(2, 3))
    W = Tensor(rng.normal(size=(3, 3)))

    def grad_through(mask):
        s = Tensor(x.copy(), requires_grad=True)
        out = ts.straight_through_mask(s, mask) if mask is not None else s
        return ad.backward(ad.sum_all(ad.square(ad.matmul(out, W))))[s]

    # the loss is row-wise, so dropping row 1 leaves row 0's gradient untouched
    g_masked = grad_through(np.array([1, 0]))
    np.testing.assert_array_equal(g_masked[0], grad_through(None)[0])
    assert np.all(g_masked[1] == 0)


def test_pack_unpack_round_trip():
    mask = np.array([1, 0, 1, 1, 0, 0, 0, 1, 1, 0, 1])
    blob = ts.pack_mask(mask)
    assert len(blob) == 2
    assert blob[0] == 0b10110001
    np.testing.assert_array_equal(ts.unpack_mask(blob, 11), mask)


def test_unpack_short_blob():
    with pytest.raises(DimensionError, match="holds 8 bits, need 9"):
        ts.unpack_mask(b"\xff", 9)


def test_probability_count_mismatch():
    with pytest.raises(DimensionError):
        ts.select(Tensor(np.zeros((4, 2))), np.zeros(3), 0.5)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 200), st.floats(-100, 100), st.floats(0.05, 1.0), st.integers(0, 2**31))
def test_selection_invariant_to_score_shift(M, shift, gamma, seed):
    rng = np.random.default_rng(seed)
    s, scores = Tensor(rng.normal(size=(M, 2))), rng.integers(0, 20, size=M).astype(float)
    assert np.array_equal(ts.select(s, scores, gamma).mask, ts.select(s, scores + shift, gamma).mask)


def test_all_zero_mask_blocks_everything():
    s = Tensor(np.random.default_rng(5).normal(size=(3, 4)), requires_grad=True)
    out = ts.straight_through_mask(s, np.zeros(3))
    assert np.all(out.data == 0)
    assert np.all(ad.backward(ad.sum_all(out * 3.0), wrt=[s])[s] == 0)


def test_identical_tokens_score_equally():
    store = selector()
    s = Tensor(np.tile(np.random.default_rng(6).normal(size=8), (2, 5, 1)))
    p = ts.score_tokens(*ts.split_features(s, store, "sel"), store, "sel").data
    assert np.all(p == p.flat[0])
