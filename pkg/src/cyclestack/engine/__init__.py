"""Self-contained rank-4 tensor engine with reverse-mode autodiff."""

from . import ops
from .adam import Adam, AdamState, adam_step
from .gradcheck import finite_difference_grad, gradcheck, max_error
from .tensor import Tape, Tensor, backward, current_tape, paused, record

__all__ = [
    "Adam",
    "AdamState",
    "Tape",
    "Tensor",
    "adam_step",
    "backward",
    "current_tape",
    "finite_difference_grad",
    "gradcheck",
    "max_error",
    "ops",
    "paused",
    "record",
]
