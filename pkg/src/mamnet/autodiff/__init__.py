from . import ops
from .gradcheck import GradCheckResult, grad_check, relative_error, sample_coords
from .tensor import (
    NonFiniteError,
    Tensor,
    as_tensor,
    backward,
    check_finite,
    default_dtype,
    no_grad,
    precision,
    record,
    record_branches,
)

__all__ = [
    "ops",
    "Tensor",
    "as_tensor",
    "backward",
    "check_finite",
    "default_dtype",
    "no_grad",
    "precision",
    "record",
    "record_branches",
    "grad_check",
    "GradCheckResult",
    "relative_error",
    "sample_coords",
    "NonFiniteError",
]
