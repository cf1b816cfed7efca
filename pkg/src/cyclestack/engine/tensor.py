"""Dense rank-4 float32 tensors with reverse-mode autodiff on an explicit tape.

Every value in the system is a ``Tensor`` of shape (batch, channels, height,
width); scalars are (1, 1, 1, 1) tensors and per-channel vectors are
(1, C, 1, 1). Operations record themselves on the innermost active ``Tape``.
Backward rules are themselves written in terms of taped operations, so a
backward pass run with ``create_graph=True`` produces gradients that can be
differentiated again (needed for gradient-norm penalties).
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from ..errors import NumericError, ShapeError, TapeError

Shape4 = tuple[int, int, int, int]

_f32 = np.float32


class Tensor:
    """A rank-4 float32 array plus gradient bookkeeping.

    ``data`` is always C-contiguous float32. ``grad`` is populated (as a plain
    ndarray of the same shape) by ``Tape.backward``; it accumulates across
    backward calls until cleared.
    """

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=_f32)
        if arr.ndim != 4:
            raise ShapeError(f"tensors are rank-4, got shape {arr.shape}")
        self.data = np.ascontiguousarray(arr)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def zeros(shape: Sequence[int], requires_grad: bool = False) -> "Tensor":
        return Tensor(np.zeros(tuple(shape), dtype=_f32), requires_grad)

    @staticmethod
    def full(shape: Sequence[int], value: float, requires_grad: bool = False) -> "Tensor":
        return Tensor(np.full(tuple(shape), value, dtype=_f32), requires_grad)

    @staticmethod
    def scalar(value: float, requires_grad: bool = False) -> "Tensor":
        return Tensor(np.full((1, 1, 1, 1), value, dtype=_f32), requires_grad)

    @staticmethod
    def channel_vector(values, requires_grad: bool = False) -> "Tensor":
        """A per-channel parameter stored as (1, C, 1, 1)."""
        arr = np.asarray(values, dtype=_f32).reshape(1, -1, 1, 1)
        return Tensor(arr, requires_grad)

    # -- views ----------------------------------------------------------------

    @property
    def shape(self) -> Shape4:
        return self.data.shape  # type: ignore[return-value]

    @property
    def numel(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """Same data, cut off from any tape history."""
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.grad = None
        out.requires_grad = False
        return out

    def copy(self, requires_grad: Optional[bool] = None) -> "Tensor":
        rg = self.requires_grad if requires_grad is None else requires_grad
        return Tensor(self.data.copy(), rg)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


def _wrap(data: np.ndarray) -> Tensor:
    """Fast internal constructor: trusts dtype/contiguity of ``data``."""
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = False
    return out


def check_finite(arr: np.ndarray, what: str = "tensor") -> None:
    # A float64 full-reduction is cheap and NaN/Inf poison the sum.
    if not math.isfinite(float(arr.sum(dtype=np.float64))):
        raise NumericError(f"non-finite values in {what}")


# -- the tape ------------------------------------------------------------------

BackwardRule = Callable[[Tensor], tuple[Optional[Tensor], ...]]


class _Record:
    __slots__ = ("out", "inputs", "rule")

    def __init__(self, out: Tensor, inputs: tuple[Tensor, ...], rule: BackwardRule):
        self.out = out
        self.inputs = inputs
        self.rule = rule


_TAPE_STACK: list[Optional["Tape"]] = []


def current_tape() -> Optional["Tape"]:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


@contextmanager
def paused() -> Iterator[None]:
    """Suspend recording within the dynamic extent (cheap inference mode)."""
    _TAPE_STACK.append(None)
    try:
        yield
    finally:
        _TAPE_STACK.pop()


class Tape:
    """Ordered log of recorded operations; context manager activates it."""

    def __init__(self):
        self._records: list[_Record] = []
        self._produced: dict[int, int] = {}  # id(out tensor) -> record index

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        popped = _TAPE_STACK.pop()
        assert popped is self

    def __len__(self) -> int:
        return len(self._records)

    @contextmanager
    def _activate(self) -> Iterator[None]:
        _TAPE_STACK.append(self)
        try:
            yield
        finally:
            _TAPE_STACK.pop()

    def _add(self, out: Tensor, inputs: tuple[Tensor, ...], rule: BackwardRule) -> None:
        self._produced[id(out)] = len(self._records)
        self._records.append(_Record(out, inputs, rule))

    # -- reverse pass ----------------------------------------------------------

    def _walk(
        self,
        loss: Tensor,
        create_graph: bool,
        seed: Optional[Tensor] = None,
    ) -> dict[int, tuple[Tensor, Tensor]]:
        """Accumulate d(loss)/d(tensor) for everything reachable from ``loss``.

        Returns {id(tensor): (tensor, grad)} covering every visited
        requires_grad tensor. With ``create_graph`` the grads are recorded on
        this tape and can be differentiated again.
        """
        from . import ops  # local import avoids a cycle at module load

        idx = self._produced.get(id(loss))
        if idx is None:
            raise TapeError("backward target was not produced on this tape")
        if loss.numel != 1:
            raise ShapeError(f"backward target must be a single element, got {loss.shape}")

        live: dict[int, tuple[Tensor, Tensor]] = {}
        done: dict[int, tuple[Tensor, Tensor]] = {}
        seed_t = seed if seed is not None else _wrap(np.ones((1, 1, 1, 1), dtype=_f32))
        live[id(loss)] = (loss, seed_t)

        snapshot = self._records[: idx + 1]
        ctx = self._activate() if create_graph else paused()
        with ctx:
            for rec in reversed(snapshot):
                entry = live.pop(id(rec.out), None)
                if entry is None:
                    continue
                done[id(rec.out)] = entry
                grads_in = rec.rule(entry[1])
                for t, g in zip(rec.inputs, grads_in):
                    if g is None or not t.requires_grad:
                        continue
                    prev = live.get(id(t))
                    live[id(t)] = (t, g if prev is None else ops.add(prev[1], g))
        done.update(live)
        return done

    def backward(self, loss: Tensor, create_graph: bool = False) -> None:
        """Accumulate gradients of ``loss`` into ``.grad`` of reachable tensors."""
        result = self._walk(loss, create_graph)
        for t, g in result.values():
            if not t.requires_grad:
                continue
            if t.grad is None:
                t.grad = g.data.copy()
            else:
                t.grad += g.data

    def gradients(
        self,
        loss: Tensor,
        wrt: Sequence[Tensor],
        create_graph: bool = False,
    ) -> list[Tensor]:
        """Gradients of ``loss`` w.r.t. ``wrt`` as tensors; ``.grad`` untouched.

        Unreachable entries come back as zero tensors.
        """
        result = self._walk(loss, create_graph)
        out = []
        for t in wrt:
            entry = result.get(id(t))
            if entry is None:
                out.append(Tensor.zeros(t.shape))
            else:
                out.append(entry[1])
        return out


def backward(loss: Tensor, tape: Tape, create_graph: bool = False) -> None:
    """Free-function spelling of ``tape.backward(loss)``."""
    tape.backward(loss, create_graph=create_graph)


def record(
    out: Tensor,
    inputs: tuple[Tensor, ...],
    rule: BackwardRule,
) -> Tensor:
    """Attach ``out`` to the active tape if any input participates in autodiff."""
    tape = current_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape._add(out, inputs, rule)
    return out
