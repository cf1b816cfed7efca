"""
Reverse-mode autodiff on rank-4 tensors
=======================================

Every value in this library is a float32 tensor of shape (N, C, H, W).
Operations record themselves on an explicit tape; calling backward on a
scalar loss walks the tape in reverse and accumulates gradients.
"""

import numpy as np

from cyclestack.engine import Tape, Tensor, gradcheck, ops

rng = np.random.default_rng(0)

# A leaf tensor that wants gradients. Shape is (batch, channels, height,
# width) even for things that are conceptually vectors; the engine has one
# rank and sticks to it.
x = Tensor(rng.normal(size=(1, 2, 3, 3)).astype(np.float32), requires_grad=True)
w = Tensor(rng.normal(size=(1, 2, 3, 3)).astype(np.float32), requires_grad=True)

# Build a tiny computation: mean(tanh(x * w)). Recording only happens
# inside a Tape context; outside one, ops run eagerly with no history.
with Tape() as tape:
    y = ops.mean_all(ops.tanh(ops.mul(x, w)))
    tape.backward(y)

print("loss          :", float(y.data))
print("dL/dx[0,0,0,0]:", float(x.grad[0, 0, 0, 0]))
print("dL/dw[0,0,0,0]:", float(w.grad[0, 0, 0, 0]))

# The tape can also differentiate a gradient. gradients(..., create_graph=
# True) returns grads as tensors whose construction was itself recorded, so
# a scalar built from them can be pushed backward again. That is what the
# discriminator gradient penalty does during training.
x.grad = None
w.grad = None
with Tape() as tape:
    y = ops.mean_all(ops.tanh(ops.mul(x, w)))
    (gx,) = tape.gradients(y, [x], create_graph=True)
    gnorm = ops.sum_all(ops.mul(gx, gx))
    tape.backward(gnorm)

print("||dL/dx||^2   :", float(gnorm.data))
print("d||g||^2/dw   : populated =", w.grad is not None)

# gradcheck compares analytic gradients against central finite differences.
# It takes a zero-argument closure so the same graph can be rebuilt for
# each probe, and reports the worst relative error over all parameters.
x = Tensor(rng.uniform(-0.9, 0.9, size=(2, 3, 4, 4)).astype(np.float32), requires_grad=True)
err = gradcheck(lambda: ops.mean_all(ops.mul(ops.sigmoid(x), ops.sigmoid(x))), [x])
print("gradcheck err :", f"{err:.2e}  (central differences, h=1e-3)")
