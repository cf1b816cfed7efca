"""Adam optimizer over named parameter tensors.

All accumulator math stays in float32 with a fixed operation order so repeated
runs are bit-identical.
"""

from __future__ import annotations

import math
from typing import Iterable, Optional

import numpy as np

from ..errors import NumericError, ShapeError
from .tensor import Tensor

_f32 = np.float32


class AdamState:
    """First/second-moment accumulators plus the step counter for one tensor."""

    __slots__ = ("m", "v", "step")

    def __init__(self, shape: tuple[int, ...]):
        self.m = np.zeros(shape, dtype=_f32)
        self.v = np.zeros(shape, dtype=_f32)
        self.step = 0


def adam_step(
    param: Tensor,
    grad: np.ndarray,
    state: AdamState,
    lr: float,
    beta1: float = 0.5,
    beta2: float = 0.999,
    eps: float = 1e-8,
    name: str = "param",
) -> None:
    """One bias-corrected Adam update, in place."""
    if grad.shape != param.data.shape or state.m.shape != param.data.shape:
        raise ShapeError(
            f"adam_step: shape mismatch for {name}: param {param.data.shape}, "
            f"grad {grad.shape}, state {state.m.shape}"
        )
    if lr < 0:
        raise ValueError("adam_step: lr must be >= 0")
    if not math.isfinite(float(grad.sum(dtype=np.float64))):
        raise NumericError(f"non-finite gradient for parameter {name!r}")
    state.step += 1
    t = state.step
    g = grad if grad.dtype == _f32 else grad.astype(_f32)
    state.m *= _f32(beta1)
    state.m += _f32(1.0 - beta1) * g
    state.v *= _f32(beta2)
    state.v += _f32(1.0 - beta2) * (g * g)
    m_hat = state.m / _f32(1.0 - beta1**t)
    v_hat = state.v / _f32(1.0 - beta2**t)
    param.data -= _f32(lr) * m_hat / (np.sqrt(v_hat) + _f32(eps))


class Adam:
    """Adam over a list of (name, tensor) pairs, driven by ``.grad`` fields."""

    def __init__(
        self,
        named_params: Iterable[tuple[str, Tensor]],
        lr: float = 2e-4,
        beta1: float = 0.5,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self._entries = [(name, p, AdamState(p.shape)) for name, p in named_params]
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)

    def step(self, lr: Optional[float] = None) -> None:
        use_lr = self.lr if lr is None else float(lr)
        for name, p, st in self._entries:
            if p.grad is None:
                continue
            adam_step(p, p.grad, st, use_lr, self.beta1, self.beta2, self.eps, name)

    def zero_grad(self) -> None:
        for _, p, _ in self._entries:
            p.grad = None
