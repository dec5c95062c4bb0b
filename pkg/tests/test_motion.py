import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from mamnet.autodiff import Tensor, backward, grad_check, ops, precision
from mamnet.motion import clip_motion_pairs, init_motion, motion_label, predict_motion
from mamnet.params import ParamBuilder


def xor_oracle(a, b):
    out = np.zeros(a.shape, dtype=np.uint8)
    for idx in np.ndindex(a.shape):
        out[idx] = 1 if int(a[idx]) != int(b[idx]) else 0
    return out


binary_maps = arrays(np.uint8, (6, 7), elements=st.integers(0, 1))


def test_identical_masks_give_zero():
    a = np.eye(5, dtype=np.uint8)
    assert not motion_label(a, a).any()


def test_truth_table_example():
    out = motion_label([[1, 0], [0, 0]], [[0, 1], [0, 0]])
    np.testing.assert_array_equal(out, [[1, 1], [0, 0]])
    assert out.dtype == np.uint8


def test_matches_inequality_oracle_on_1000_pairs():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        a, b = rng.integers(0, 2, size=(2, 8, 8))
        np.testing.assert_array_equal(motion_label(a, b), xor_oracle(a, b))


def test_rejects_non_binary_and_shape_mismatch():
    with pytest.raises(ValueError, match="binary"):
        motion_label(np.full((2, 2), 0.5), np.zeros((2, 2)))
    with pytest.raises(ValueError, match="shapes"):
        motion_label(np.zeros((2, 2)), np.zeros((2, 3)))


@settings(max_examples=60, deadline=None)
@given(binary_maps, binary_maps)
def test_symmetry(a, b):
    np.testing.assert_array_equal(motion_label(a, b), motion_label(b, a))


@settings(max_examples=60, deadline=None)
@given(binary_maps)
def test_self_annihilation_and_complement(a):
    assert not motion_label(a, a).any()
    assert motion_label(a, 1 - a).all()


def test_clip_pairs():
    assert clip_motion_pairs(4) == [(0, 1), (1, 2), (2, 3)]
    assert clip_motion_pairs(2) == [(0, 1)]
    with pytest.warns(UserWarning, match="no motion pairs"):
        assert clip_motion_pairs(1) == []


# ---------------------------------------------------------------- head

def head(c=4, seed=0, dtype=np.float32):
    pb = ParamBuilder(seed, dtype)
    init_motion(pb, c)
    return pb.params


def test_head_shape_and_range():
    p = head()
    rng = np.random.default_rng(0)
    d = [Tensor(rng.normal(size=(2, 12, 4, 4)).astype(np.float32)) for _ in range(2)]
    out = predict_motion(d[0], d[1], p, (16, 16)).data
    assert out.shape == (2, 1, 16, 16)
    assert np.all((out > 0) & (out < 1))


def test_zero_weights_give_half():
    p = {k: Tensor(np.zeros_like(v.data)) for k, v in head().items()}
    d = Tensor(np.random.default_rng(1).normal(size=(1, 12, 4, 4)))
    np.testing.assert_array_equal(predict_motion(d, d, p, (16, 16)).data, 0.5)


def test_head_is_order_sensitive():
    p = head()
    rng = np.random.default_rng(2)
    a, b = (Tensor(rng.normal(size=(1, 12, 4, 4)).astype(np.float32)) for _ in range(2))
    assert not np.allclose(predict_motion(a, b, p, (16, 16)).data, predict_motion(b, a, p, (16, 16)).data)


def test_mismatched_resolutions_rejected():
    p = head()
    with pytest.raises(ValueError, match="shape"):
        predict_motion(Tensor(np.zeros((1, 12, 4, 4))), Tensor(np.zeros((1, 12, 8, 8))), p, (16, 16))


def test_gradient_reaches_both_frames():
    rng = np.random.default_rng(3)
    with precision(np.float64):
        p = head(dtype=np.float64)
        x = {"d_t": Tensor(rng.normal(size=(1, 12, 4, 4)), requires_grad=True),
             "d_next": Tensor(rng.normal(size=(1, 12, 4, 4)), requires_grad=True)}
        probe = Tensor(rng.normal(size=(1, 1, 8, 8)))

        def fn():
            return ops.sum(ops.mul(predict_motion(x["d_t"], x["d_next"], p, (8, 8)), probe))

        backward(fn())
        assert np.abs(x["d_t"].grad).max() > 0 and np.abs(x["d_next"].grad).max() > 0
        assert grad_check(fn, x).max_rel_error < 1e-3
