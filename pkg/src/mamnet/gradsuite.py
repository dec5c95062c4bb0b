"""Finite-difference checks for every differentiable op and the full model loss."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Tuple

import numpy as np

from . import astm, decoder, losses
from .autodiff import Tensor, grad_check, ops, precision, sample_coords
from .config import BackboneConfig, ModelConfig
from .model import forward_clips, init_params
from .motion import motion_label, predict_motion
from .params import ParamBuilder

OP_TOLERANCE = 1e-3
MODEL_TOLERANCE = 5e-3
MODEL_COORDS = 50


@dataclass
class CheckOutcome:
    name: str
    max_rel_error: float
    tolerance: float
    seconds: float
    n_checked: int = 0
    n_skipped: int = 0

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def _leaf(rng, *shape, lo=None, hi=None):
    data = rng.uniform(lo, hi, size=shape) if lo is not None else rng.normal(size=shape)
    return Tensor(data, requires_grad=True, dtype=np.float64)


def _op_cases(rng) -> Dict[str, Tuple[Dict[str, Tensor], Callable[[Dict[str, Tensor]], Tensor]]]:
    r = np.random.default_rng(rng.integers(1 << 31))
    mask = (r.uniform(size=(2, 1, 12, 12)) > 0.5).astype(np.float64)
    cases = {
        "add": ({"a": _leaf(r, 2, 3), "b": _leaf(r, 3)}, lambda p: ops.add(p["a"], p["b"])),
        "sub": ({"a": _leaf(r, 2, 3), "b": _leaf(r, 2, 1)}, lambda p: ops.sub(p["a"], p["b"])),
        "mul": ({"a": _leaf(r, 2, 3), "b": _leaf(r, 2, 3)}, lambda p: ops.mul(p["a"], p["b"])),
        "div": ({"a": _leaf(r, 2, 3), "b": _leaf(r, 2, 3, lo=0.5, hi=2.0)},
                lambda p: ops.div(p["a"], p["b"])),
        "neg_scale": ({"a": _leaf(r, 4)}, lambda p: ops.scale(ops.neg(p["a"]), 1.7)),
        "relu": ({"a": _leaf(r, 5, 5)}, lambda p: ops.relu(p["a"])),
        "sigmoid": ({"a": _leaf(r, 5, 5)}, lambda p: ops.sigmoid(p["a"])),
        "log": ({"a": _leaf(r, 6, lo=0.2, hi=3.0)}, lambda p: ops.log(p["a"])),
        "square": ({"a": _leaf(r, 6)}, lambda p: ops.square(p["a"])),
        "clamp": ({"a": _leaf(r, 8)}, lambda p: ops.clamp(p["a"], -0.5, 0.5)),
        "sum_mean": ({"a": _leaf(r, 3, 4)},
                     lambda p: ops.add(ops.sum(p["a"], axis=1), ops.mean(p["a"], axis=1))),
        "global_avg_pool": ({"a": _leaf(r, 2, 3, 4, 5)}, lambda p: ops.global_avg_pool(p["a"])),
        "reshape_transpose": ({"a": _leaf(r, 2, 6)},
                              lambda p: ops.transpose(ops.reshape(p["a"], (3, 4)), (1, 0))),
        "concat_split": ({"a": _leaf(r, 2, 3), "b": _leaf(r, 2, 2)},
                         lambda p: ops.concat(ops.split(ops.concat([p["a"], p["b"]], 1), [4, 1], 1)[::-1], 1)),
        "index_select_flip": ({"a": _leaf(r, 4, 3)},
                              lambda p: ops.flip(ops.index_select(p["a"], [3, 0, 0, 2]), 1)),
        "matmul": ({"a": _leaf(r, 3, 4), "b": _leaf(r, 4, 2)}, lambda p: ops.matmul(p["a"], p["b"])),
        "matmul_batched": ({"a": _leaf(r, 2, 3, 4), "b": _leaf(r, 2, 4, 5)},
                           lambda p: ops.matmul_batched(p["a"], p["b"])),
        "softmax": ({"a": _leaf(r, 3, 6)}, lambda p: ops.softmax(p["a"], axis=-1)),
        "conv2d": ({"x": _leaf(r, 2, 3, 7, 7), "w": _leaf(r, 4, 3, 3, 3), "b": _leaf(r, 4)},
                   lambda p: ops.conv2d(p["x"], p["w"], p["b"], stride=2, padding=1)),
        "bilinear_resize": ({"a": _leaf(r, 1, 2, 3, 4)}, lambda p: ops.bilinear_resize(p["a"], 7, 5)),
        "upsample": ({"a": _leaf(r, 1, 2, 3, 3)}, lambda p: ops.upsample(p["a"], 2)),
        "bce_loss": ({"p": _leaf(r, 2, 1, 12, 12, lo=0.05, hi=0.95)}, lambda p: losses.bce_loss(p["p"], mask)),
        "ssim_loss": ({"p": _leaf(r, 2, 1, 12, 12, lo=0.05, hi=0.95)}, lambda p: losses.ssim_loss(p["p"], mask)),
        "iou_loss": ({"p": _leaf(r, 2, 1, 12, 12, lo=0.05, hi=0.95)}, lambda p: losses.iou_loss(p["p"], mask)),
        "memory_read": ({"qk": _leaf(r, 1, 3, 2, 2), "qv": _leaf(r, 1, 6, 2, 2),
                         "mk": _leaf(r, 1, 2, 3, 2, 2), "mv": _leaf(r, 1, 2, 6, 2, 2)},
                        lambda p: astm.memory_read(astm.KeyValuePair(p["qk"], p["qv"]),
                                                   astm.MemoryBank(p["mk"], p["mv"]))),
    }

    pb = ParamBuilder(int(r.integers(1 << 31)), np.float64)
    decoder.init_ffs(pb, "ffs", 4)
    ffs_params = {k: Tensor(v.data, requires_grad=True, dtype=np.float64) for k, v in pb.params.items()}
    ffs_in = {"h": _leaf(r, 1, 4, 2, 2), "l": _leaf(r, 1, 4, 4, 4)}
    cases["ffs"] = ({**ffs_params, **ffs_in},
                    lambda p: decoder.ffs(p["h"], p["l"], p, "ffs"))

    pb = ParamBuilder(int(r.integers(1 << 31)), np.float64)
    pb.conv("motion.predict", 1, 24, 3)
    cases["motion_head"] = ({**pb.params, "d_t": _leaf(r, 1, 12, 3, 3), "d_n": _leaf(r, 1, 12, 3, 3)},
                            lambda p: predict_motion(p["d_t"], p["d_n"], p, (6, 6)))
    return cases


def smallest_model() -> ModelConfig:
    """Tiny configuration at 32x32, the smallest input the five-level encoder accepts."""
    return ModelConfig(backbone=BackboneConfig(input_size=(32, 32), channels=(4, 4, 6, 6, 8)),
                       decoder_width=8)


def model_check(seed: int, n_coords: int = MODEL_COORDS) -> CheckOutcome:
    t0 = time.time()
    rng = np.random.default_rng(seed)
    cfg = smallest_model()
    with precision(np.float64):
        params = init_params(cfg, seed=seed, dtype=np.float64)
        frames = rng.uniform(size=(2, 3, 32, 32))
        masks = np.zeros((2, 1, 32, 32))
        y, x = rng.integers(4, 14, size=2)
        masks[0, 0, y:y + 12, x:x + 12] = 1
        masks[1, 0, y + 1:y + 13, x + 2:x + 14] = 1
        m_lab = motion_label(masks[0, 0], masks[1, 0])[None, None].astype(np.float64)

        def fn():
            out = forward_clips(frames, 2, params, cfg)
            return losses.total_loss(out.saliency, masks, out.motion, m_lab, stage=2).l_total

        # coordinates straddling a relu/clamp kink are replaced until n_coords
        # differentiable ones have been scored
        errors, seen, skipped = [], set(), 0
        while len(errors) < n_coords:
            fresh = [c for c in sample_coords(params, 2 * n_coords, rng) if c not in seen]
            fresh = fresh[:n_coords - len(errors)]
            if not fresh:
                break
            seen.update(fresh)
            res = grad_check(fn, params, fresh, tolerance=MODEL_TOLERANCE, skip_kinks=True)
            errors += res.errors
            skipped += len(res.skipped)
    return CheckOutcome("full_model_stage2_loss", max(errors), MODEL_TOLERANCE, time.time() - t0,
                        n_checked=len(errors), n_skipped=skipped)


def run_suite(seed: int = 0, include_model: bool = True) -> List[CheckOutcome]:
    rng = np.random.default_rng(seed)
    out = []
    with precision(np.float64):
        for name, (params, fn) in _op_cases(rng).items():
            t0 = time.time()
            probe_rng = np.random.default_rng(rng.integers(1 << 31))
            weights = {}

            def scalar(params=params, fn=fn, weights=weights):
                y = fn(params)
                if y.data.ndim == 0:
                    return y
                if "w" not in weights:
                    weights["w"] = Tensor(probe_rng.normal(size=y.shape), dtype=np.float64)
                return ops.sum(ops.mul(y, weights["w"]))

            res = grad_check(scalar, params, tolerance=OP_TOLERANCE, skip_kinks=True)
            out.append(CheckOutcome(name, res.max_rel_error, OP_TOLERANCE, time.time() - t0,
                                    len(res.checked), len(res.skipped)))
    if include_model:
        out.append(model_check(seed))
    return out
