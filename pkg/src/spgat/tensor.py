"""Dense float64 tensors and a tape for reverse-mode differentiation.

Operations (see :mod:`spgat.ops`) record themselves on the innermost active
:class:`Tape` whenever one of their inputs requires a gradient. Outside a tape
nothing is recorded, which is how inference runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import NumericError, ShapeError, TapeError

_TAPES: list["Tape"] = []


def check_finite(arr: np.ndarray, what: str) -> None:
    # a single reduction is cheap; the elementwise scan only runs on failure
    if np.isfinite(arr.sum()):
        return
    bad = ~np.isfinite(arr)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise NumericError(f"{what}: non-finite value {arr[idx]!r} at index {idx}")


class Tensor:
    """A float64 array with an optional gradient buffer.

    ``grad`` is ``None`` unless ``requires_grad`` is set, in which case it reads
    as zeros until a backward pass accumulates into it.
    """

    __slots__ = ("data", "requires_grad", "_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 _checked: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if any(n <= 0 for n in arr.shape):
            raise ShapeError(f"tensor extents must be positive, got {arr.shape}")
        if not _checked:
            check_finite(arr, name or "tensor")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self._grad = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def grad(self) -> np.ndarray | None:
        if not self.requires_grad:
            return None
        if self._grad is None:
            self._grad = np.zeros_like(self.data)
        return self._grad

    def zero_grad(self) -> None:
        self._grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        # never in place: gradient arrays may be shared between tensors
        self._grad = g if self._grad is None else self._grad + g

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, shape is {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # operator sugar, resolved lazily to avoid an import cycle
    def __add__(self, other):
        from .ops import add
        return add(self, other)

    def __radd__(self, other):
        from .ops import add
        return add(other, self)

    def __sub__(self, other):
        from .ops import sub
        return sub(self, other)

    def __rsub__(self, other):
        from .ops import sub
        return sub(other, self)

    def __mul__(self, other):
        from .ops import mul
        return mul(self, other)

    def __rmul__(self, other):
        from .ops import mul
        return mul(other, self)

    def __neg__(self):
        from .ops import mul
        return mul(self, -1.0)

    def __matmul__(self, other):
        from .ops import matmul
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class Node:
    out: Tensor
    inputs: tuple[Tensor, ...]
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]
    op: str


class Tape:
    """Ordered record of primitive applications.

    Use as a context manager; tapes nest and operations record on the
    innermost one.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self._index: dict[int, int] = {}

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPES.remove(self)

    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, t: Tensor) -> bool:
        return id(t) in self._index

    def record(self, out: Tensor, inputs, backward, op: str) -> None:
        self._index[id(out)] = len(self.nodes)
        self.nodes.append(Node(out, tuple(inputs), backward, op))


def active_tape() -> Tape | None:
    return _TAPES[-1] if _TAPES else None


def make_output(data: np.ndarray, inputs: Sequence[Tensor], backward, op: str,
                finite: bool | None = None) -> Tensor:
    """Wrap an op result and record it if any input needs a gradient.

    Kernels that already scanned their output pass ``finite`` to skip the
    extra reduction.
    """
    if not finite:
        check_finite(data, op)
    out = Tensor(data, _checked=True)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(out, inputs, backward, op)
    return out


def backward(tape: Tape, loss: Tensor, retain_intermediate: bool = True) -> None:
    """Populate ``.grad`` on every tensor reachable from ``loss`` on ``tape``.

    Gradients accumulate into existing buffers, so call ``zero_grad`` on
    parameters between steps. With ``retain_intermediate=False`` only leaf
    tensors (those not produced on the tape) receive gradients, which keeps
    peak memory down during training.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    pos = tape._index.get(id(loss))
    if pos is None or tape.nodes[pos].out is not loss:
        raise TapeError("loss was not recorded on this tape")

    pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    owners: dict[int, Tensor] = {id(loss): loss}
    for node in reversed(tape.nodes[:pos + 1]):
        g = pending.pop(id(node.out), None)
        if g is None:
            continue
        if retain_intermediate:
            node.out._accumulate(g)
        in_grads = node.backward(g)
        for t, gi in zip(node.inputs, in_grads):
            if gi is None or not t.requires_grad:
                continue
            if gi.shape != t.shape:
                raise ShapeError(f"{node.op}: gradient shape {gi.shape} != input shape {t.shape}")
            k = id(t)
            owners[k] = t
            prev = pending.get(k)
            pending[k] = gi if prev is None else prev + gi
    # what is left belongs to leaves; a non-finite value anywhere upstream lands here
    for k, g in pending.items():
        check_finite(g, f"gradient of {owners[k].name or 'leaf tensor'}")
        owners[k]._accumulate(g)
