import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vdjscc import autodiff as ad
from vdjscc import gradcheck
from vdjscc.autodiff import DimensionError, Tensor


def T(x, grad=False):
    return Tensor(np.asarray(x, dtype=float), requires_grad=grad)


class TestMatmul:
    def test_identity(self):
        out = ad.matmul(T([[1, 0], [0, 1]]), T([[3, 4], [5, 6]]))
        np.testing.assert_array_equal(out.data, [[3, 4], [5, 6]])

    def test_row_times_column(self):
        assert ad.matmul(T([[1, 2]]), T([[3], [4]])).data.tolist() == [[11.0]]

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        a, b = T(rng.normal(size=(4, 5)), True), T(rng.normal(size=(5, 3)), True)
        err = gradcheck.check(lambda: ad.sum_all(ad.matmul(a, b)), [a, b])
        assert err < 1e-6

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
            ad.matmul(T(np.ones((2, 3))), T(np.ones((2, 3))))

    def test_batched_leading_dims_broadcast(self):
        a = T(np.ones((2, 3, 4)))
        b = T(np.ones((4, 5)))
        assert ad.matmul(a, b).shape == (2, 3, 5)


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(ad.softmax(T([0.0, 0.0, 0.0]), axis=0).data, [1 / 3] * 3)

    def test_large_logits_do_not_overflow(self):
        out = ad.softmax(T([1000.0, 0.0]), axis=0).data
        assert np.all(np.isfinite(out))
        assert out[0] == 1.0 and out[1] == 0.0

    def test_rows_sum_to_one(self):
        x = T(np.random.default_rng(0).normal(size=(3, 4)))
        sums = ad.softmax(x, axis=-1).data.sum(axis=-1)
        assert np.max(np.abs(sums - 1.0)) < 1e-12

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (3, 5), elements=st.floats(-50, 50)), st.sampled_from([0, 1, -1]))
    def test_probability_simplex(self, x, axis):
        out = ad.softmax(T(x), axis=axis).data
        assert np.all(out > 0) and np.all(out <= 1)
        assert np.max(np.abs(out.sum(axis=axis) - 1.0)) < 1e-12

    def test_bad_axis(self):
        with pytest.raises(DimensionError):
            ad.softmax(T(np.ones((2, 2))), axis=2)


class TestLayerNorm:
    def test_constant_vector_maps_to_zero(self):
        out = ad.layer_norm(T([5.0, 5, 5, 5]), T(np.ones(4)), T(np.zeros(4)))
        np.testing.assert_array_equal(out.data, np.zeros(4))

    def test_two_point_standardization(self):
        out = ad.layer_norm(T([1.0, 3.0]), T(np.ones(2)), T(np.zeros(2)))
        # eps=1e-5 on unit variance perturbs the result at the 5e-6 level
        np.testing.assert_allclose(out.data, [-1.0, 1.0], atol=1e-5)

    def test_gradient(self):
        rng = np.random.default_rng(1)
        x, g, b = T(rng.normal(size=(3, 5)), True), T(rng.normal(size=5), True), T(rng.normal(size=5), True)
        w = rng.normal(size=(3, 5))
        err = gradcheck.check(lambda: ad.sum_all(ad.layer_norm(x, g, b) * T(w)), [x, g, b])
        assert err < 1e-5

    def test_gain_shape_checked(self):
        with pytest.raises(DimensionError):
            ad.layer_norm(T(np.ones((2, 4))), T(np.ones(3)), T(np.zeros(3)))


class TestShapeOps:
    def test_gather(self):
        assert ad.gather(T([10.0, 20, 30]), [2, 0]).data.tolist() == [30, 10]

    def test_scatter_zeros(self):
        assert ad.scatter_zeros(T([7.0, 8]), [1, 3], 4).data.tolist() == [0, 7, 0, 8]

    def test_reshape_round_trip(self):
        x = T(np.arange(24.0))
        back = ad.reshape(ad.reshape(x, (2, 3, 4)), (24,))
        np.testing.assert_array_equal(back.data, x.data)

    def test_reshape_mismatch(self):
        with pytest.raises(DimensionError):
            ad.reshape(T(np.ones(5)), (2, 3))

    def test_batched_gather_and_scatter_are_inverse_on_kept_rows(self):
        x = T(np.arange(24.0).reshape(2, 4, 3))
        idx = np.array([[0, 2], [1, 3]])
        kept = ad.gather(x, idx, axis=1)
        assert kept.data[1, 0].tolist() == x.data[1, 1].tolist()
        back = ad.scatter_zeros(kept, idx, 4, axis=1).data
        np.testing.assert_array_equal(back[0, [0, 2]], x.data[0, [0, 2]])
        assert np.all(back[0, [1, 3]] == 0)

    def test_add_shape_mismatch(self):
        with pytest.raises(DimensionError):
            ad.add(T(np.ones((2, 3))), T(np.ones((4,))))


class TestBackward:
    def test_sum_gives_ones(self):
        x = T(np.random.default_rng(0).normal(size=(2, 3, 4)), True)
        g = ad.backward(ad.sum_all(x))
        np.testing.assert_array_equal(g[x], np.ones((2, 3, 4)))

    def test_sum_of_squares(self):
        x = T([1.0, 2.0], True)
        ad.backward(ad.sum_all(ad.square(x)))
        assert x.grad.tolist() == [2.0, 4.0]

    def test_non_scalar_loss_rejected(self):
        with pytest.raises(ValueError):
            ad.backward(T([1.0, 2.0], True) * 2.0)

    def test_unused_inputs_get_zero_gradient(self):
        x, unused = T([1.0, 2.0], True), T([3.0], True)
        g = ad.backward(ad.sum_all(x), wrt=[x, unused])
        assert g[unused].tolist() == [0.0]

    def test_shared_subexpression_accumulates(self):
        x = T([3.0], True)
        y = x * x
        ad.backward(ad.sum_all(y + y))
        assert x.grad.tolist() == [12.0]

    def test_backward_twice_is_bit_identical(self):
        rng = np.random.default_rng(0)
        x, w = T(rng.normal(size=(3, 4)), True), T(rng.normal(size=(4, 2)), True)
        loss = ad.sum_all(ad.gelu(ad.linear(x, w)))
        first = {k: v.copy() for k, v in ad.backward(loss).items()}
        second = ad.backward(loss)
        for k in first:
            assert np.array_equal(first[k], second[k])

    def test_no_grad_records_nothing(self):
        x = T([1.0], True)
        with ad.no_grad():
            y = x * 2.0
        assert not y.requires_grad

    def test_corruption_hook_is_detected(self):
        x = T(np.random.default_rng(0).normal(size=(3, 4)), True)
        with ad.corrupt_gradients("gelu"):
            err = gradcheck.check(lambda: ad.sum_all(ad.gelu(x)), [x])
        assert err > 1e-4


@pytest.mark.parametrize("name", sorted(gradcheck.primitive_cases()))
def test_primitive_gradients(name):
    fn, inputs = gradcheck.primitive_cases()[name]
    assert gradcheck.check(fn, inputs) < gradcheck.PRIMITIVE_TOL


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, (2, 3), elements=st.floats(-5, 5)))
def test_finite_outputs_for_finite_inputs(x):
    t = T(x)
    for out in (ad.softmax(t, -1), ad.gelu(t), ad.sigmoid(t), ad.layer_norm(t, T(np.ones(3)), T(np.zeros(3)))):
        assert np.all(np.isfinite(out.data))


def test_backward_reports_intermediate_gradients():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    y = x * 3.0
    loss = ad.sum_all(y * y)
    grads = ad.backward(loss, [y])
    np.testing.assert_array_equal(grads[y], 2 * y.data)
    np.testing.assert_array_equal(grads[x], 6 * y.data)
