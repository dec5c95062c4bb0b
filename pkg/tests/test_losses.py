import math

import numpy as np
import pytest

from mamnet.autodiff import Tensor, grad_check, precision
from mamnet.losses import (SSIM_C1, SSIM_C2, bce_loss, iou_loss, ssim_loss, total_loss)


def maps(*arrays):
    return [Tensor(np.asarray(a, dtype=np.float64)[None, None], dtype=np.float64) for a in arrays]


def ssim_oracle(pred, label, k=11):
    """1 - mean SSIM over valid windows, one window at a time in float64."""
    h, w = pred.shape
    vals = []
    for i in range(h - k + 1):
        for j in range(w - k + 1):
            x = pred[i:i + k, j:j + k].astype(np.float64).ravel()
            y = label[i:i + k, j:j + k].astype(np.float64).ravel()
            mx, my = x.mean(), y.mean()
            vx, vy = ((x - mx) ** 2).mean(), ((y - my) ** 2).mean()
            cxy = ((x - mx) * (y - my)).mean()
            vals.append((2 * mx * my + SSIM_C1) * (2 * cxy + SSIM_C2)
                        / ((mx ** 2 + my ** 2 + SSIM_C1) * (vx + vy + SSIM_C2)))
    return 1 - np.mean(vals)


def blob(h=16, w=16, y0=4, x0=5, size=7):
    m = np.zeros((h, w))
    m[y0:y0 + size, x0:x0 + size] = 1
    return m


# ---------------------------------------------------------------- bce

def test_bce_half_is_ln2():
    label = np.random.default_rng(0).integers(0, 2, size=(1, 1, 8, 8))
    assert abs(bce_loss(Tensor(np.full((1, 1, 8, 8), 0.5)), label).item() - math.log(2)) < 1e-6


def test_bce_quarter_on_positive_label():
    out = bce_loss(Tensor(np.full((1, 1, 4, 4), 0.25), dtype=np.float64), np.ones((1, 1, 4, 4)))
    assert abs(out.item() + math.log(0.25)) < 1e-12


def test_bce_perfect_prediction_hits_clamp():
    label = blob()[None, None]
    out = bce_loss(Tensor(label, dtype=np.float64), label)
    assert abs(out.item() + math.log(1 - 1e-7)) < 1e-12


def test_bce_rejects_non_binary_label():
    with pytest.raises(ValueError, match="binary"):
        bce_loss(Tensor(np.full((1, 1, 2, 2), 0.5)), np.full((1, 1, 2, 2), 0.3))


# ---------------------------------------------------------------- ssim

def test_ssim_identical_is_zero():
    label = blob()
    pred, = maps(label)
    assert ssim_loss(pred, label[None, None]).item() < 1e-6
    pred32 = Tensor(label[None, None].astype(np.float32))
    assert ssim_loss(pred32, label[None, None]).item() < 1e-6


def test_ssim_all_ones_vs_zeros():
    expected = 1 - SSIM_C1 / (1 + SSIM_C1)
    out = ssim_loss(Tensor(np.zeros((1, 1, 16, 16))), np.ones((1, 1, 16, 16)))
    assert abs(out.item() - expected) < 1e-6


def test_ssim_matches_window_oracle():
    rng = np.random.default_rng(0)
    pred = rng.uniform(size=(16, 16))
    label = (rng.uniform(size=(16, 16)) > 0.5).astype(np.float64)
    out = ssim_loss(*maps(pred), label[None, None]).item()
    assert abs(out - ssim_oracle(pred, label)) < 1e-5
    out32 = ssim_loss(Tensor(pred[None, None].astype(np.float32)), label[None, None]).item()
    assert abs(out32 - ssim_oracle(pred, label)) < 1e-5


def test_ssim_shift_increases_loss():
    label = blob(20, 20, 5, 5, 9)
    same = ssim_loss(*maps(label), label[None, None]).item()
    shifted = ssim_loss(*maps(np.roll(label, 1, axis=1)), label[None, None]).item()
    assert shifted > same


def test_ssim_small_image_shrinks_window():
    with pytest.warns(UserWarning, match="smaller than the SSIM window"):
        out = ssim_loss(*maps(np.full((6, 8), 0.3)), np.zeros((1, 1, 6, 8)))
    assert np.isfinite(out.item())


# ---------------------------------------------------------------- iou

def test_iou_perfect_and_disjoint():
    label = blob()
    assert iou_loss(*maps(label), label[None, None]).item() < 1e-9
    other = blob(y0=12, x0=0, size=3)
    assert abs(iou_loss(*maps(other), label[None, None]).item() - 1) < 1e-12


def test_iou_half_on_full_label():
    out = iou_loss(Tensor(np.full((1, 1, 8, 8), 0.5)), np.ones((1, 1, 8, 8)))
    assert abs(out.item() - 0.5) < 1e-6


def test_bce_and_iou_positive_for_soft_predictions():
    label = blob()
    soft = np.clip(label * 0.9 + 0.05, 0, 1)
    assert bce_loss(*maps(soft), label[None, None]).item() > 1e-3
    assert iou_loss(*maps(soft), label[None, None]).item() > 1e-3


# ---------------------------------------------------------------- total

def test_total_zero_when_components_zero():
    # a perfect binary prediction is the zero point up to the BCE clamp
    label = blob()[None, None]
    out = total_loss(Tensor(label, dtype=np.float64), label, stage=1)
    assert out.l_total.item() < 1e-6 and out.l_motion.item() == 0


def test_stage1_omits_motion():
    rng = np.random.default_rng(0)
    pred = Tensor(rng.uniform(0.05, 0.95, size=(2, 1, 16, 16)))
    label = (rng.uniform(size=(2, 1, 16, 16)) > 0.5).astype(np.float32)
    out = total_loss(pred, label, Tensor(np.full((1, 1, 16, 16), 0.3)), np.ones((1, 1, 16, 16)), stage=1)
    v = out.values()
    assert v["l_motion"] == 0
    assert out.l_total.item() == (out.l_bce.data + out.l_ssim.data + out.l_iou.data).item()


def test_total_equals_independent_recomputation():
    rng = np.random.default_rng(1)
    pred = rng.uniform(0.01, 0.99, size=(3, 1, 16, 16))
    label = (rng.uniform(size=(3, 1, 16, 16)) > 0.6).astype(np.float64)
    mp = rng.uniform(0.01, 0.99, size=(2, 1, 16, 16))
    ml = (rng.uniform(size=(2, 1, 16, 16)) > 0.9).astype(np.float64)
    with precision(np.float64):
        out = total_loss(Tensor(pred), label, Tensor(mp), ml, stage=2).values()

    def bce(p, y):
        return float(np.mean(-(y * np.log(p) + (1 - y) * np.log(1 - p))))

    iou = np.mean([1 - (p * y).sum() / ((p + y - p * y).sum() + 1e-8) for p, y in zip(pred, label)])
    ssim = np.mean([ssim_oracle(p[0], y[0]) for p, y in zip(pred, label)])
    expected = bce(pred, label) + ssim + iou + bce(mp, ml)
    assert abs(out["l_total"] - expected) < 1e-6


def test_stage2_without_pairs_warns():
    pred = Tensor(np.full((1, 1, 16, 16), 0.5))
    with pytest.warns(UserWarning, match="motion"):
        out = total_loss(pred, np.zeros((1, 1, 16, 16)), Tensor(np.zeros((0, 1, 16, 16))),
                         np.zeros((0, 1, 16, 16)), stage=2)
    assert out.l_motion.item() == 0


def test_losses_invariant_to_batch_permutation():
    rng = np.random.default_rng(2)
    pred = rng.uniform(0.05, 0.95, size=(3, 1, 16, 16))
    label = (rng.uniform(size=(3, 1, 16, 16)) > 0.5).astype(np.float64)
    perm = [2, 0, 1]
    with precision(np.float64):
        for fn in (bce_loss, ssim_loss, iou_loss):
            a = fn(Tensor(pred), label).item()
            b = fn(Tensor(pred[perm]), label[perm]).item()
            assert abs(a - b) < 1e-12


@pytest.mark.parametrize("fn", [bce_loss, ssim_loss, iou_loss])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_loss_gradcheck(fn, seed):
    rng = np.random.default_rng(seed)
    label = (rng.uniform(size=(2, 1, 12, 12)) > 0.5).astype(np.float64)
    with precision(np.float64):
        p = {"pred": Tensor(rng.uniform(0.05, 0.95, size=(2, 1, 12, 12)), requires_grad=True)}
        assert fn(p["pred"], label).item() >= 0
        assert grad_check(lambda: fn(p["pred"], label), p).max_rel_error < 1e-3
