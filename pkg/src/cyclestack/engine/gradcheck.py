"""Finite-difference gradient checking, shipped so any caller can self-verify.

Central differences with step ``h`` against the tape's analytic gradients.
The error measure is ``|analytic - numeric| / max(floor, |analytic|, |numeric|)``
with the denominator floored at 1, i.e. relative error for large gradients and
absolute error near zero, where float32 forward-pass roundoff dominates any
true signal.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor, paused

LossFn = Callable[[], Tensor]


def finite_difference_grad(
    fn: LossFn, params: Sequence[Tensor], h: float = 1e-3
) -> list[np.ndarray]:
    """Numeric d(fn)/d(param) by central differences, one element at a time.

    ``fn`` must recompute its value from the current contents of ``params``;
    elements are perturbed in place and restored. Runs untaped.
    """
    grads = []
    with paused():
        for p in params:
            flat = p.data.reshape(-1)
            g = np.zeros(flat.size, dtype=np.float64)
            for i in range(flat.size):
                orig = float(flat[i])
                flat[i] = orig + h
                f_plus = fn().item()
                flat[i] = orig - h
                f_minus = fn().item()
                flat[i] = orig
                g[i] = (f_plus - f_minus) / (2.0 * h)
            grads.append(g.reshape(p.shape))
    return grads


def max_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1.0) -> float:
    a = analytic.astype(np.float64)
    n = numeric.astype(np.float64)
    den = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float((np.abs(a - n) / den).max()) if a.size else 0.0


def gradcheck(fn: LossFn, params: Sequence[Tensor], h: float = 1e-3) -> float:
    """Worst-case error between taped and finite-difference gradients.

    Every tensor in ``params`` must have ``requires_grad=True``. Existing
    ``.grad`` contents are preserved.
    """
    for p in params:
        if not p.requires_grad:
            raise ValueError("gradcheck params must have requires_grad=True")
    saved = [p.grad for p in params]
    for p in params:
        p.grad = None
    with Tape() as tape:
        loss = fn()
        tape.backward(loss)
    analytic = [
        p.grad.copy() if p.grad is not None else np.zeros(p.shape, dtype=np.float64)
        for p in params
    ]
    for p, s in zip(params, saved):
        p.grad = s
    numeric = finite_difference_grad(fn, params, h)
    return max(max_error(a, n) for a, n in zip(analytic, numeric))
