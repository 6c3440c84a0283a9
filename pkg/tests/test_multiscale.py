import numpy as np
import pytest

from vdjscc import multiscale as ms
from vdjscc.autodiff import Tensor
from vdjscc.errors import DimensionError
from vdjscc.params import ParamStore


def merge_params(K):
    store = ParamStore(0)
    ms.init_merge(store, "m", K)
    return store


def test_merge_index_row_major_blocks():
    idx = ms.merge_index(4, 4)
    assert idx[0].tolist() == [0, 1, 4, 5]
    assert idx[1].tolist() == [2, 3, 6, 7]
    assert idx[2].tolist() == [8, 9, 12, 13]


def test_odd_grid_rejected():
    with pytest.raises(DimensionError, match="even grid"):
        ms.merge_index(3, 4)


def test_merged_token_concatenates_sources_in_order():
    K = 3
    store = merge_params(K)
    # first 2K outputs copy the first 2K concatenated inputs
    w = np.zeros((4 * K, 2 * K))
    w[: 2 * K, : 2 * K] = np.eye(2 * K)
    store["m.merge.weight"].data = w
    f = np.arange(16 * K, dtype=float).reshape(1, 16, K)
    out = ms.patch_merge(Tensor(f), store, "m", 4, 4).data
    assert out.shape == (1, 4, 2 * K)
    np.testing.assert_array_equal(out[0, 0], np.concatenate([f[0, 0], f[0, 1]]))


def test_reverse_of_merge_with_inverse_maps_is_exact():
    # 4K -> 2K cannot be inverted in general, so use tokens that live in the
    # K/2-dim subspace carried through losslessly
    K = 4
    store = merge_params(K)
    rng = np.random.default_rng(0)
    f = np.zeros((2, 16, K))
    f[..., : K // 2] = rng.integers(-8, 8, size=(2, 16, K // 2))
    keep = np.concatenate([np.arange(K // 2) + j * K for j in range(4)])
    sel = np.zeros((4 * K, 2 * K))
    sel[keep, np.arange(2 * K)] = 1.0
    store["m.merge.weight"].data = sel
    store["m.reverse.weight"].data = sel.T.copy()
    merged = ms.patch_merge(Tensor(f), store, "m", 4, 4)
    back = ms.patch_reverse_merge(merged, store, "m", 4, 4).data
    assert np.array_equal(back, f)


def test_reverse_merge_shape():
    store = merge_params(8)
    out = ms.patch_reverse_merge(Tensor(np.zeros((3, 4, 16))), store, "m", 4, 4)
    assert out.shape == (3, 16, 8)


def test_average_is_elementwise_mean():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=(2, 3, 4)), rng.normal(size=(2, 3, 4))
    np.testing.assert_array_equal(ms.average(Tensor(a), Tensor(b)).data, (a + b) / 2)


def test_average_shape_mismatch():
    with pytest.raises(DimensionError):
        ms.average(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 2))))


@pytest.mark.parametrize("multiscale", [True, False])
def test_encoder_and_decoder_preserve_grid_shape(multiscale):
    store = ParamStore(2)
    ms.init_encoder(store, "enc", 8, 1, 2, 4, 4, 2, multiscale)
    ms.init_decoder(store, "dec", 8, 1, 2, 4, 4, 2, multiscale)
    z = Tensor(np.random.default_rng(3).normal(size=(1, 2, 16, 8)))
    s = ms.two_branch_encode(z, store, "enc", 4, 4, 2, 1, multiscale)
    assert s.shape == z.shape
    assert ms.two_branch_decode(s, store, "dec", 4, 4, 2, 1, multiscale).shape == z.shape


def test_single_scale_ablation_uses_double_depth_stack():
    store = ParamStore(0)
    ms.init_encoder(store, "enc", 8, 2, 2, 4, 4, 2, multiscale=False)
    assert "enc.stem.st.3.ln1.gain" in store
    assert not any(n.startswith("enc.branch") for n in store)


def test_full_scale_grid_merge_shapes():
    K = 4
    store = merge_params(K)
    merged = ms.patch_merge(Tensor(np.zeros((8, 196, K))), store, "m", 14, 14)
    assert merged.shape == (8, 49, 2 * K)
    assert ms.patch_reverse_merge(merged, store, "m", 14, 14).shape == (8, 196, K)


def test_two_by_two_grid_merges_to_one_token():
    store = merge_params(2)
    assert ms.patch_merge(Tensor(np.ones((3, 4, 2))), store, "m", 2, 2).shape == (3, 1, 4)


def test_average_of_equal_branches():
    a = np.random.default_rng(4).normal(size=(2, 5))
    assert np.array_equal(ms.average(Tensor(a), Tensor(a.copy())).data, a)
