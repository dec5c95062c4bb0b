import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from mamnet.autodiff import (NonFiniteError, Tensor, backward, check_finite, grad_check, ops,
                             precision, record)

SEEDS = [0, 1, 2]


def leaf(arr, dtype=np.float64):
    return Tensor(np.asarray(arr, dtype=dtype), requires_grad=True, dtype=dtype)


def naive_conv(x, w, b, stride, pad):
    bsz, cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((bsz, cout, ho, wo))
    for n in range(bsz):
        for o in range(cout):
            for i in range(ho):
                for j in range(wo):
                    patch = xp[n, :, i * stride:i * stride + kh, j * stride:j * stride + kw]
                    out[n, o, i, j] = (patch * w[o]).sum() + b[o]
    return out


def weighted_sum(t, rng):
    """Scalar probe: a fixed random projection of ``t``."""
    proj = Tensor(rng.normal(size=t.shape), dtype=t.dtype)
    return ops.sum(ops.mul(t, proj))


# ---------------------------------------------------------------- conv2d

def test_conv_identity_kernel():
    x = Tensor(np.ones((1, 1, 3, 3)))
    k = np.zeros((1, 1, 3, 3))
    k[0, 0, 1, 1] = 1
    out = ops.conv2d(x, Tensor(k), Tensor(np.zeros(1)), padding=1)
    np.testing.assert_array_equal(out.data, x.data)


def test_conv_full_window_sum():
    x = Tensor(np.array([[[[1, 2], [3, 4]]]]))
    out = ops.conv2d(x, Tensor(np.ones((1, 1, 2, 2))), Tensor(np.zeros(1)))
    np.testing.assert_array_equal(out.data, [[[[10]]]])


@pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1), (2, 0)])
def test_conv_matches_loop_oracle(stride, pad):
    rng = np.random.default_rng(3)
    x = rng.normal(size=(2, 3, 6, 5))
    w = rng.normal(size=(4, 3, 3, 3))
    b = rng.normal(size=4)
    out = ops.conv2d(Tensor(x, dtype=np.float64), Tensor(w, dtype=np.float64),
                     Tensor(b, dtype=np.float64), stride=stride, padding=pad)
    np.testing.assert_allclose(out.data, naive_conv(x, w, b, stride, pad), atol=1e-10)


@pytest.mark.parametrize("seed", SEEDS)
def test_conv_gradcheck(seed):
    rng = np.random.default_rng(seed)
    bsz, cin, cout = rng.integers(1, 3), rng.integers(1, 4), rng.integers(1, 4)
    h, w = rng.integers(3, 7, size=2)
    stride = int(rng.integers(1, 3))
    with precision(np.float64):
        params = {"x": leaf(rng.normal(size=(bsz, cin, h, w))),
                  "w": leaf(rng.normal(size=(cout, cin, 3, 3))),
                  "b": leaf(rng.normal(size=cout))}
        probe = np.random.default_rng(seed + 100)
        proj = Tensor(probe.normal(size=ops.conv2d(params["x"], params["w"], params["b"],
                                                   stride=stride, padding=1).shape))
        res = grad_check(lambda: ops.sum(ops.mul(
            ops.conv2d(params["x"], params["w"], params["b"], stride=stride, padding=1), proj)),
            params, step=1e-3)
    assert res.max_rel_error < 1e-3


def test_conv_rejects_channel_mismatch():
    with pytest.raises(ValueError, match="dim 1"):
        ops.conv2d(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))))


def test_conv_rejects_oversized_kernel():
    with pytest.raises(ValueError, match="height"):
        ops.conv2d(Tensor(np.zeros((1, 1, 2, 8))), Tensor(np.zeros((1, 1, 3, 3))))


# ---------------------------------------------------------------- softmax

def test_softmax_equal_logits():
    np.testing.assert_allclose(ops.softmax(Tensor(np.zeros(4))).data, [0.25] * 4)


def test_softmax_analytic():
    out = ops.softmax(Tensor(np.array([0.0, np.log(2.0)]), dtype=np.float64)).data
    np.testing.assert_allclose(out, [1 / 3, 2 / 3], rtol=1e-12)


@pytest.mark.parametrize("seed", SEEDS)
def test_softmax_gradcheck(seed):
    rng = np.random.default_rng(seed)
    with precision(np.float64):
        params = {"x": leaf(rng.normal(size=(3, 5)))}
        probe = Tensor(rng.normal(size=(3, 5)))
        res = grad_check(lambda: ops.sum(ops.mul(ops.softmax(params["x"], axis=-1), probe)), params)
    assert res.max_rel_error < 1e-3


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(np.float32, (3, 7), elements=st.floats(-1e4, 1e4, width=32)))
def test_softmax_slices_sum_to_one_for_large_logits(x):
    out = ops.softmax(Tensor(x), axis=1).data
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-5)


def test_softmax_rejects_empty_axis():
    with pytest.raises(ValueError):
        ops.softmax(Tensor(np.zeros((2, 0))), axis=1)


# ---------------------------------------------------------------- matmul

def test_matmul_identity_and_scalar():
    a = np.arange(6, dtype=np.float32).reshape(2, 3)
    np.testing.assert_array_equal(ops.matmul_batched(Tensor(a), Tensor(np.eye(3))).data, a)
    np.testing.assert_array_equal(ops.matmul(Tensor([[2.0]]), Tensor([[3.0]])).data, [[6.0]])


def test_matmul_triple_loop_oracle():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(3, 4)).astype(np.float32), rng.normal(size=(4, 2)).astype(np.float32)
    ref = np.zeros((3, 2))
    for i in range(3):
        for j in range(2):
            for k in range(4):
                ref[i, j] += float(a[i, k]) * float(b[k, j])
    assert np.abs(ops.matmul(Tensor(a), Tensor(b)).data - ref).max() < 1e-5


@pytest.mark.parametrize("seed", SEEDS)
def test_matmul_batched_gradcheck(seed):
    rng = np.random.default_rng(seed)
    with precision(np.float64):
        params = {"a": leaf(rng.normal(size=(2, 3, 4))), "b": leaf(rng.normal(size=(1, 4, 2)))}
        probe = Tensor(rng.normal(size=(2, 3, 2)))
        res = grad_check(lambda: ops.sum(ops.mul(ops.matmul(params["a"], params["b"]), probe)), params)
    assert res.max_rel_error < 1e-3


def test_matmul_inner_mismatch():
    with pytest.raises(ValueError, match="inner"):
        ops.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


# ---------------------------------------------------------------- bilinear

@pytest.mark.parametrize("size", [(1, 1), (3, 7), (8, 8), (16, 5)])
def test_bilinear_constant(size):
    out = ops.bilinear_resize(Tensor(np.full((1, 2, 4, 4), 0.37)), *size)
    np.testing.assert_allclose(out.data, 0.37, rtol=1e-6)


def test_bilinear_half_pixel_row():
    # s = (d + 0.5) * 2/4 - 0.5 -> -0.25 (clamped), 0.25, 0.75, 1.25 (clamped)
    out = ops.bilinear_resize(Tensor(np.array([[[[1.0, 3.0]]]])), 1, 4)
    np.testing.assert_allclose(out.data[0, 0, 0], [1.0, 1.5, 2.5, 3.0])


@pytest.mark.parametrize("seed", SEEDS)
def test_bilinear_gradcheck(seed):
    rng = np.random.default_rng(seed)
    with precision(np.float64):
        params = {"x": leaf(rng.normal(size=(1, 2, 2, 3)))}
        probe = Tensor(rng.normal(size=(1, 2, 4, 6)))
        res = grad_check(lambda: ops.sum(ops.mul(ops.bilinear_resize(params["x"], 4, 6), probe)), params)
    assert res.max_rel_error < 1e-3


# ---------------------------------------------------------------- pooling

def test_gap_values():
    assert ops.global_avg_pool(Tensor(np.full((1, 1, 3, 2), 2.5))).data.item() == 2.5
    out = ops.global_avg_pool(Tensor(np.array([[[[1.0, 3.0], [5.0, 7.0]]]])))
    assert out.shape == (1, 1, 1, 1) and out.data.item() == 4.0


def test_gap_backward_distributes_evenly():
    x = leaf(np.random.default_rng(0).normal(size=(1, 2, 3, 4)))
    backward(ops.sum(ops.global_avg_pool(x)))
    np.testing.assert_allclose(x.grad, 1 / 12)


# ---------------------------------------------------------------- pointwise

def test_sigmoid_at_zero():
    x = leaf([0.0])
    y = ops.sigmoid(x)
    backward(ops.sum(y))
    assert y.data[0] == 0.5 and x.grad[0] == 0.25


def test_sigmoid_open_interval():
    y = ops.sigmoid(Tensor(np.array([-30.0, 0.0, 30.0]), dtype=np.float64)).data
    assert np.all((y > 0) & (y < 1))


def test_relu_values_and_zero_gradient_at_zero():
    x = leaf([-2.0, 0.0, 3.0])
    y = ops.relu(x)
    backward(ops.sum(y))
    np.testing.assert_array_equal(y.data, [0, 0, 3])
    np.testing.assert_array_equal(x.grad, [0, 0, 1])


def test_clamp_gradient_band():
    x = leaf([-1.0, 0.0, 0.5, 1.0, 2.0])
    backward(ops.sum(ops.clamp(x, 0.0, 1.0)))
    np.testing.assert_array_equal(x.grad, [0, 1, 1, 1, 0])


@pytest.mark.parametrize("seed", SEEDS)
def test_pointwise_composite_gradcheck(seed):
    rng = np.random.default_rng(seed)
    with precision(np.float64):
        params = {"a": leaf(rng.normal(size=(3, 4))), "b": leaf(rng.normal(size=(3, 4)))}

        def fn():
            a, b = params["a"], params["b"]
            s = ops.sigmoid(ops.mul(a, b))
            r = ops.relu(ops.sub(a, ops.neg(b)))
            l = ops.log(ops.add(ops.clamp(s, 0.05, 0.95), 1.0))
            return ops.sum(ops.add(ops.mul(l, r), ops.square(ops.div(a, ops.add(ops.square(b), 1.0)))))

        res = grad_check(fn, params)
    assert res.max_rel_error < 1e-3


def test_binary_shape_mismatch_rejected():
    with pytest.raises(ValueError, match="not compatible"):
        ops.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 2))))


# ---------------------------------------------------------------- concat / split / flip

def test_concat_single_and_pair():
    x = Tensor(np.array([1.0, 2.0]))
    np.testing.assert_array_equal(ops.concat([x]).data, x.data)
    np.testing.assert_array_equal(ops.concat([x, Tensor(np.array([3.0]))]).data, [1, 2, 3])


def test_concat_backward_ones():
    a, b = leaf(np.zeros((2, 3))), leaf(np.zeros((2, 1)))
    backward(ops.sum(ops.concat([a, b], axis=1)))
    np.testing.assert_array_equal(a.grad, 1)
    np.testing.assert_array_equal(b.grad, 1)


def test_concat_extent_mismatch():
    with pytest.raises(ValueError, match="dim 0"):
        ops.concat([Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 3)))], axis=1)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=1, max_size=4), st.integers(0, 10))
def test_concat_split_and_flip_roundtrip(sizes, seed):
    x = Tensor(np.random.default_rng(seed).normal(size=(sum(sizes), 3)).astype(np.float32))
    back = ops.concat(ops.split(x, sizes, axis=0), axis=0)
    assert back.data.tobytes() == x.data.tobytes()
    assert ops.flip(ops.flip(x, 1), 1).data.tobytes() == x.data.tobytes()


def test_index_select_accumulates_repeats():
    x = leaf(np.arange(3.0))
    backward(ops.sum(ops.index_select(x, [0, 0, 2])))
    np.testing.assert_array_equal(x.grad, [2, 0, 1])


# ---------------------------------------------------------------- backward / record

def test_backward_square_sum():
    x = leaf([1.0, -2.0, 3.0])
    backward(ops.sum(ops.square(x)))
    np.testing.assert_array_equal(x.grad, [2, -4, 6])


def test_backward_chain_through_zero_input():
    w = leaf([1.7])
    backward(ops.sum(ops.sigmoid(ops.mul(Tensor([0.0], dtype=np.float64), w))))
    assert w.grad[0] == 0


def test_backward_accumulates_shared_nodes():
    x = leaf([3.0])
    y = ops.add(ops.mul(x, x), x)
    backward(ops.sum(y))
    assert x.grad[0] == 7.0


def test_backward_rejects_non_scalar():
    with pytest.raises(ValueError, match="scalar"):
        backward(ops.mul(leaf([1.0, 2.0]), 2.0))


def test_record_lists_ops_in_execution_order():
    x = leaf(np.ones((1, 1, 2, 2)))
    with record() as trace:
        ops.sum(ops.relu(ops.global_avg_pool(x)))
    assert trace == ["global_avg_pool", "relu", "sum"]


def test_forward_is_bit_identical():
    rng = np.random.default_rng(0)
    x = Tensor(rng.normal(size=(2, 3, 8, 8)))
    w = Tensor(rng.normal(size=(4, 3, 3, 3)))
    a = ops.softmax(ops.conv2d(x, w, padding=1), axis=1).data
    b = ops.softmax(ops.conv2d(x, w, padding=1), axis=1).data
    assert a.tobytes() == b.tobytes()


# ---------------------------------------------------------------- grad_check itself

def test_grad_check_linear_is_exact():
    with precision(np.float64):
        params = {"x": leaf(np.random.default_rng(0).normal(size=5))}
        coef = Tensor(np.arange(5.0))
        res = grad_check(lambda: ops.sum(ops.mul(params["x"], coef)), params)
    assert res.max_rel_error < 1e-6


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_check_conv_relu_pool_stack(seed):
    rng = np.random.default_rng(seed)
    with precision(np.float64):
        params = {"x": leaf(rng.normal(size=(2, 2, 5, 5))), "w": leaf(rng.normal(size=(3, 2, 3, 3))),
                  "b": leaf(rng.normal(size=3))}
        proj = Tensor(rng.normal(size=(2, 3, 1, 1)))
        res = grad_check(lambda: ops.sum(ops.mul(ops.global_avg_pool(
            ops.relu(ops.conv2d(params["x"], params["w"], params["b"], padding=1))), proj)), params)
    assert res.max_rel_error < 1e-3


def test_grad_check_flags_corrupted_gradient():
    with precision(np.float64):
        params = {"x": leaf(np.random.default_rng(1).normal(size=4))}
        fn = lambda: ops.sum(ops.square(params["x"]))  # noqa: E731
        res = grad_check(fn, params, analytic_override={"x": 2 * 2 * params["x"].data})
    assert abs(res.max_rel_error - 0.5) < 1e-6
    assert not res.passed


def test_non_finite_reported_with_op_name():
    with check_finite(), pytest.raises(NonFiniteError, match="div"):
        ops.div(Tensor([1.0]), Tensor([0.0]))
