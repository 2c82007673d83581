"""Dense tensors with reverse-mode autodiff over a per-pass tape.

The tape is rebuilt on every forward pass (define-by-run): `begin_tape()`
opens a fresh recording context and every op that touches a grad-requiring
tensor appends one node. Node parents always have smaller ids, so walking
the tape backwards is a valid topological order.

Reductions go through `np.sum`, whose fixed pairwise order makes forward
values and gradients bit-reproducible for identical inputs.

Default precision is float32; gradient checking promotes to float64.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DimensionError

_CONST = -1  # parent slot for inputs that do not participate in the tape

_state = threading.local()


class TapeNode:
    __slots__ = ("op", "parents", "backward", "leaf_ref")

    def __init__(self, op, parents, backward, leaf_ref=None):
        self.op = op
        self.parents = parents
        self.backward = backward  # grad_out -> per-parent grads, None for _CONST
        self.leaf_ref = leaf_ref


class Tape:
    """Append-only op record for one logical execution context."""

    __slots__ = ("nodes",)

    def __init__(self):
        self.nodes: list[TapeNode] = []

    def add(self, op, parents, backward, leaf_ref=None) -> int:
        self.nodes.append(TapeNode(op, tuple(parents), backward, leaf_ref))
        return len(self.nodes) - 1


def begin_tape() -> Tape:
    """Start a fresh tape for the current thread and return it."""
    tape = Tape()
    _state.tape = tape
    return tape


def active_tape() -> Tape | None:
    return getattr(_state, "tape", None)


class no_grad:
    """Context manager that suspends tape recording."""

    def __enter__(self):
        self._saved = getattr(_state, "tape", None)
        _state.tape = None
        return self

    def __exit__(self, *exc):
        _state.tape = self._saved
        return False


class Tensor:
    """N-dimensional real array, optionally tracked on the active tape."""

    __slots__ = ("data", "requires_grad", "tape", "node")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is None:
            dtype = arr.dtype if arr.dtype in (np.float32, np.float64) else np.float32
        self.data = np.ascontiguousarray(arr, dtype=dtype)
        self.requires_grad = requires_grad
        self.tape: Tape | None = None
        self.node: int | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # operator sugar; wraps plain numbers/arrays as constants
    def __add__(self, other):
        return add(self, _wrap(other, self.dtype))

    def __radd__(self, other):
        return add(self, _wrap(other, self.dtype))

    def __sub__(self, other):
        return sub(self, _wrap(other, self.dtype))

    def __rsub__(self, other):
        return add(neg(self), _wrap(other, self.dtype))

    def __mul__(self, other):
        return mul(self, _wrap(other, self.dtype))

    def __rmul__(self, other):
        return mul(self, _wrap(other, self.dtype))

    def __truediv__(self, other):
        return div(self, _wrap(other, self.dtype))

    def __neg__(self):
        return neg(self)

    def relu(self):
        return relu(self)

    def tanh(self):
        return tanh(self)

    def sigmoid(self):
        return sigmoid(self)

    def square(self):
        return square(self)

    def sqrt(self):
        return sqrt(self)

    def abs(self):
        return absolute(self)

    def sum(self, axes=None):
        return reduce("sum", self, axes)

    def mean(self, axes=None):
        return reduce("mean", self, axes)

    def reshape(self, shape):
        return reshape(self, shape)


def _wrap(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


def zeros(shape, dtype=np.float32, requires_grad=False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)


def ones(shape, dtype=np.float32, requires_grad=False) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype), requires_grad=requires_grad)


def zeros_like(t: Tensor) -> Tensor:
    return Tensor(np.zeros_like(t.data))


def ones_like(t: Tensor) -> Tensor:
    return Tensor(np.ones_like(t.data))


def is_recording(*tensors: Tensor) -> bool:
    return active_tape() is not None and any(
        t.requires_grad or (t.tape is active_tape() and t.node is not None) for t in tensors
    )


def record(op: str, out_data: np.ndarray, parents: Sequence[Tensor],
           backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]) -> Tensor:
    """Create an op result, registering a tape node when recording is active.

    `backward` receives the gradient w.r.t. the output and returns one
    gradient array per parent (None for parents marked constant). Kernels in
    other modules use this as the extension point for custom ops.
    """
    out = Tensor(out_data)
    tape = active_tape()
    if tape is None:
        return out
    ids = []
    tracked = False
    for p in parents:
        if p.tape is tape and p.node is not None:
            ids.append(p.node)
            tracked = True
        elif p.requires_grad:
            p.tape = tape
            p.node = tape.add("leaf", (), None, leaf_ref=p)
            ids.append(p.node)
            tracked = True
        else:
            ids.append(_CONST)
    if not tracked:
        return out
    out.requires_grad = any(p.requires_grad for p in parents)
    out.tape = tape
    out.node = tape.add(op, ids, backward)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        out_shape = np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        out_shape = None
    if out_shape != a.shape:
        raise DimensionError(
            f"{op}: shape {b.shape} is not broadcastable over {a.shape}")


# -- elementwise ---------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "add")
    bshape = b.shape
    return record("add", a.data + b.data, (a, b),
                  lambda g: (g, _unbroadcast(g, bshape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "sub")
    bshape = b.shape
    return record("sub", a.data - b.data, (a, b),
                  lambda g: (g, -_unbroadcast(g, bshape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "mul")
    ad, bd, bshape = a.data, b.data, b.shape
    return record("mul", ad * bd, (a, b),
                  lambda g: (g * bd, _unbroadcast(g * ad, bshape)))


def div(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "div")
    ad, bd, bshape = a.data, b.data, b.shape
    return record("div", ad / bd, (a, b),
                  lambda g: (g / bd, _unbroadcast(-g * ad / (bd * bd), bshape)))


_ELEMENTWISE = {"add": add, "sub": sub, "mul": mul, "div": div}


def elementwise(kind: str, a: Tensor, b: Tensor) -> Tensor:
    try:
        fn = _ELEMENTWISE[kind]
    except KeyError:
        raise ContractError(f"unknown elementwise kind {kind!r}") from None
    return fn(a, b)


# -- pointwise maps ------------------------------------------------------

def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return record("relu", np.where(mask, a.data, 0), (a,), lambda g: (g * mask,))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return record("tanh", y, (a,), lambda g: (g * (1 - y * y),))


def sigmoid(a: Tensor) -> Tensor:
    e = np.exp(-np.abs(a.data))  # overflow-free in both tails
    y = np.where(a.data >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return record("sigmoid", y, (a,), lambda g: (g * y * (1 - y),))


def neg(a: Tensor) -> Tensor:
    return record("neg", -a.data, (a,), lambda g: (-g,))


def square(a: Tensor) -> Tensor:
    ad = a.data
    return record("square", ad * ad, (a,), lambda g: (g * 2 * ad,))


def sqrt(a: Tensor) -> Tensor:
    y = np.sqrt(a.data)
    return record("sqrt", y, (a,), lambda g: (g * 0.5 / y,))


def absolute(a: Tensor) -> Tensor:
    s = np.sign(a.data)
    return record("abs", np.abs(a.data), (a,), lambda g: (g * s,))


_SCALAR_MAP = {"relu": relu, "tanh": tanh, "sigmoid": sigmoid, "neg": neg,
               "square": square, "sqrt": sqrt, "abs": absolute}


def scalar_map(kind: str, a: Tensor) -> Tensor:
    try:
        fn = _SCALAR_MAP[kind]
    except KeyError:
        raise ContractError(f"unknown scalar_map kind {kind!r}") from None
    return fn(a)


# -- reductions and shape ops --------------------------------------------

def reduce(kind: str, a: Tensor, axes=None) -> Tensor:
    """Sum or mean over `axes` (all axes when None); reduced axes keep extent 1."""
    if kind not in ("sum", "mean"):
        raise ContractError(f"unknown reduce kind {kind!r}")
    if axes is None:
        axes = tuple(range(a.data.ndim))
    else:
        axes = (axes,) if isinstance(axes, int) else tuple(axes)
        for ax in axes:
            if not -a.data.ndim <= ax < a.data.ndim:
                raise DimensionError(f"reduce: axis {ax} invalid for shape {a.shape}")
        axes = tuple(ax % a.data.ndim for ax in axes)
        if len(set(axes)) != len(axes):
            raise DimensionError(f"reduce: duplicate axes {axes}")
    out = np.sum(a.data, axis=axes, keepdims=True)
    count = 1
    for ax in axes:
        count *= a.shape[ax]
    if kind == "mean":
        out = out / count
    in_shape = a.shape
    scale = 1.0 / count if kind == "mean" else 1.0

    def backward(g):
        return (np.broadcast_to(g * scale, in_shape),)

    return record(kind, out, (a,), backward)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    if -1 not in shape and int(np.prod(shape)) != a.data.size:
        raise DimensionError(f"reshape: cannot view {a.shape} as {shape}")
    in_shape = a.shape
    return record("reshape", a.data.reshape(shape), (a,),
                  lambda g: (g.reshape(in_shape),))


# -- backward pass -------------------------------------------------------

def backward(loss: Tensor) -> dict[Tensor, Tensor]:
    """Backpropagate from a scalar loss.

    Returns a map {leaf tensor -> gradient tensor} covering every
    requires_grad leaf reachable from the loss; unreachable leaves are
    absent. Multiple paths to the same leaf accumulate by summation.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss.tape is None or loss.node is None:
        raise ContractError("loss is not attached to a tape")
    tape = loss.tape
    grads: dict[int, np.ndarray] = {loss.node: np.ones_like(loss.data)}
    leaf_grads: dict[Tensor, Tensor] = {}
    for nid in range(loss.node, -1, -1):
        g = grads.pop(nid, None)
        if g is None:
            continue
        node = tape.nodes[nid]
        if node.leaf_ref is not None:
            leaf_grads[node.leaf_ref] = Tensor(g)
            continue
        for pid, pg in zip(node.parents, node.backward(g)):
            if pid == _CONST or pg is None:
                continue
            if pid in grads:
                grads[pid] = grads[pid] + pg
            else:
                grads[pid] = pg
    return leaf_grads


def grad_check(forward_fn, x: Tensor, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    Runs in float64. The error per element is
    |analytic - fd| / max(|analytic|, |fd|, 1e-12).
    """
    x64 = Tensor(x.data.astype(np.float64, copy=True), requires_grad=True)
    begin_tape()
    out = forward_fn(x64)
    if out.data.size != 1:
        raise ContractError(f"grad_check needs a scalar-valued function, got {out.shape}")
    analytic = backward(out).get(x64)
    analytic = analytic.data if analytic is not None else np.zeros_like(x64.data)

    fd = np.zeros_like(x64.data)
    probe = Tensor(x64.data)  # shares the buffer perturbed below
    flat = x64.data.reshape(-1)
    fd_flat = fd.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = forward_fn(probe).item()
            flat[i] = orig - eps
            lo = forward_fn(probe).item()
            flat[i] = orig
            fd_flat[i] = (hi - lo) / (2 * eps)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), 1e-12)
    return float(np.max(np.abs(analytic - fd) / denom))
