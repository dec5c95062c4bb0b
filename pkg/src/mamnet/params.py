"""Parameter containers and initialisation."""
from __future__ import annotations

from typing import Dict

import numpy as np

from .autodiff import Tensor

Params = Dict[str, Tensor]


class ParamBuilder:
    """Creates named parameters from one seeded generator, in call order.

    Weights are zero-mean normal with std sqrt(2 / fan_in); biases start at 0.
    """

    def __init__(self, seed: int = 0, dtype=np.float32):
        self.rng = np.random.default_rng(seed)
        self.dtype = np.dtype(dtype)
        self.params: Params = {}

    def _add(self, name: str, arr: np.ndarray) -> None:
        if name in self.params:
            raise KeyError(f"duplicate parameter {name!r}")
        self.params[name] = Tensor(arr.astype(self.dtype), requires_grad=True, dtype=self.dtype)

    def conv(self, name: str, cout: int, cin: int, k: int, bias: bool = True,
             gain: float = 1.0, bias_value: float = 0.0) -> None:
        fan_in = cin * k * k
        self._add(f"{name}.weight",
                  gain * self.rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(cout, cin, k, k)))
        if bias:
            self._add(f"{name}.bias", np.full(cout, bias_value))

    def linear(self, name: str, nout: int, nin: int, gain: float = 1.0) -> None:
        # stored as a 1x1 convolution so it applies directly to pooled maps
        self.conv(name, nout, nin, 1, gain=gain)


def cast_params(params: Params, dtype) -> Params:
    return {k: Tensor(v.data.astype(dtype), requires_grad=True, dtype=dtype) for k, v in params.items()}
