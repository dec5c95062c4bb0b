"""Central-difference gradient checking."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .tensor import Tensor, backward, check_finite, record_branches

Coord = Tuple[str, int]


@dataclass
class GradCheckResult:
    max_rel_error: float
    tolerance: float
    worst: Optional[Coord] = None
    errors: List[float] = field(default_factory=list)
    checked: List[Coord] = field(default_factory=list)
    skipped: List[Coord] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)


def sample_coords(params: Dict[str, Tensor], n: int, rng: np.random.Generator) -> List[Coord]:
    """Pick ``n`` (name, flat index) pairs, spread over tensors by size."""
    names = list(params)
    sizes = np.array([params[k].data.size for k in names], dtype=np.float64)
    total = int(sizes.sum())
    if n >= total:
        return [(k, i) for k in names for i in range(params[k].data.size)]
    flat = rng.choice(total, size=n, replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    coords = []
    for f in np.sort(flat):
        t = int(np.searchsorted(offsets, f, side="right") - 1)
        coords.append((names[t], int(f - offsets[t])))
    return coords


def grad_check(
    fn: Callable[[], Tensor],
    params: Dict[str, Tensor],
    coords: Optional[Sequence[Coord]] = None,
    step: float = 1e-3,
    tolerance: float = 1e-3,
    analytic_override: Optional[Dict[str, np.ndarray]] = None,
    skip_kinks: bool = False,
) -> GradCheckResult:
    """Compare backprop gradients of scalar ``fn()`` to central differences.

    ``params`` should hold float64 tensors; float32 central differences at
    step 1e-3 are dominated by rounding.  ``analytic_override`` replaces the
    backprop gradient (used to check the checker itself).

    With ``skip_kinks`` a coordinate whose +/- step changes the branch taken by
    any relu or clamp is skipped: the function is not differentiable on that
    interval, so the central difference says nothing about the gradient.
    Skipped coordinates are listed in the result instead of scored.
    """
    for p in params.values():
        p.grad = None
    with check_finite(), record_branches() as base:
        loss = fn()
    backward(loss)
    grads = {k: (p.grad if p.grad is not None else np.zeros_like(p.data)) for k, p in params.items()}
    if analytic_override:
        grads.update(analytic_override)
    if coords is None:
        coords = [(k, i) for k, p in params.items() for i in range(p.data.size)]

    errors, checked, skipped = [], [], []
    worst, worst_err = None, -1.0
    for name, idx in coords:
        flat = params[name].data.reshape(-1)
        orig = flat[idx]
        with check_finite():
            flat[idx] = orig + step
            with record_branches() as b_plus:
                plus = float(fn().data)
            flat[idx] = orig - step
            with record_branches() as b_minus:
                minus = float(fn().data)
        flat[idx] = orig
        if skip_kinks and (b_plus != base or b_minus != base):
            skipped.append((name, idx))
            continue
        checked.append((name, idx))
        numeric = (plus - minus) / (2 * step)
        err = relative_error(float(grads[name].reshape(-1)[idx]), numeric)
        errors.append(err)
        if err > worst_err:
            worst, worst_err = (name, idx), err
    return GradCheckResult(max(errors, default=0.0), tolerance, worst, errors, checked, skipped)
