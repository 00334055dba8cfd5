"""Tape-based reverse-mode differentiation over float64 numpy arrays.

Every primitive takes ``Node`` objects or plain arrays/scalars. When at least
one operand is a ``Node`` owned by a recording tape, the result is a new
``Node`` appended to that tape; otherwise the plain value is computed the same
way and wrapped in an unrecorded node (or returned as an ndarray when no node
was involved at all).

Example::

    tape = Tape()
    x = tape.leaf([1.0, 2.0, 3.0])
    y = ag.sum(ag.square(x))
    grads = tape.backward(y)
    grads[x]          # array([2., 4., 6.])
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterator, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "AutogradError",
    "ShapeError",
    "DomainError",
    "NonFiniteError",
    "BackwardError",
    "Node",
    "Tape",
    "as_array",
    "value_of",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "square",
    "sqrt",
    "exp",
    "log",
    "absolute",
    "maximum",
    "clamp",
    "relu",
    "sum",
    "mean",
    "reshape",
    "matmul",
    "linear",
    "conv1d",
    "softmax_cross_entropy",
    "grad_check",
]


class AutogradError(ValueError):
    """Base class for errors raised by the differentiation engine."""


class ShapeError(AutogradError):
    pass


class DomainError(AutogradError):
    """Operand outside the primitive's domain (division by zero, log of <= 0)."""


class NonFiniteError(AutogradError):
    pass


class BackwardError(AutogradError):
    pass


Operand = Union["Node", np.ndarray, float, int, Sequence[float]]


def as_array(value) -> np.ndarray:
    """Coerce to a float64 ndarray (no copy when already float64)."""
    return np.asarray(value, dtype=np.float64)


class Node:
    """One value in the differentiation graph."""

    __slots__ = ("tape", "op", "inputs", "value", "adjoint", "_vjp")

    def __init__(self, tape, op, inputs, value, vjp=None):
        self.tape = tape
        self.op = op
        self.inputs = inputs
        self.value = value
        self.adjoint = None
        self._vjp = vjp

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def size(self) -> int:
        return self.value.size

    def item(self) -> float:
        if self.value.size != 1:
            raise ShapeError(f"item() on non-scalar node of shape {self.shape}")
        return float(self.value.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Node(op={self.op!r}, shape={self.value.shape})"

    # operator sugar, all routed through the primitives below
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    """Records primitive applications so a scalar root can be differentiated.

    A tape supports a single ``backward`` call; call ``reset`` to clear the
    adjoints before differentiating again.
    """

    def __init__(self, record: bool = True):
        self.record = record
        self.nodes: list[Node] = []
        self._differentiated = False

    def leaf(self, value, name: str = "leaf") -> Node:
        node = Node(self, name, (), as_array(value).copy())
        if self.record:
            self.nodes.append(node)
        return node

    def constant(self, value) -> np.ndarray:
        return as_array(value)

    @contextlib.contextmanager
    def paused(self) -> Iterator["Tape"]:
        prev = self.record
        self.record = False
        try:
            yield self
        finally:
            self.record = prev

    def reset(self) -> None:
        for node in self.nodes:
            node.adjoint = None
        self._differentiated = False

    def backward(self, root: Node) -> "Gradients":
        if not isinstance(root, Node) or root.tape is not self:
            raise BackwardError("root must be a node recorded on this tape")
        if root.value.size != 1:
            raise BackwardError(f"backward needs a scalar root, got shape {root.shape}")
        if self._differentiated:
            raise BackwardError("backward already called on this tape; call reset() first")
        self._differentiated = True

        root.adjoint = np.ones_like(root.value)
        for node in reversed(self.nodes):
            g = node.adjoint
            if g is None or node._vjp is None:
                continue
            parent_grads = node._vjp(g)
            for parent, pg in zip(node.inputs, parent_grads):
                if pg is None or not isinstance(parent, Node):
                    continue
                if parent.adjoint is None:
                    parent.adjoint = pg
                else:
                    parent.adjoint = parent.adjoint + pg
        return Gradients()


class Gradients:
    """Read-only view of adjoints after a backward pass."""

    def __getitem__(self, node: Node) -> np.ndarray:
        if node.adjoint is None:
            return np.zeros_like(node.value)
        return node.adjoint


# ---------------------------------------------------------------------------
# recording helpers


def _tape_of(*operands) -> Tape | None:
    for op in operands:
        if isinstance(op, Node) and op.tape is not None and op.tape.record:
            return op.tape
    return None


def value_of(x) -> np.ndarray:
    """Underlying array of a node, or the operand itself as an array."""
    return x.value if isinstance(x, Node) else as_array(x)


_val = value_of


def _emit(op: str, value: np.ndarray, inputs: tuple, vjp: Callable):
    tape = _tape_of(*inputs)
    if tape is None:
        if any(isinstance(i, Node) for i in inputs):
            return Node(None, op, (), value)
        return value
    node = Node(tape, op, inputs, value, vjp)
    tape.nodes.append(node)
    return node


def _check_elementwise(op: str, a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape and a.size != 1 and b.size != 1:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    # operand was a scalar (size-1) broadcast over the other
    return np.asarray(g.sum()).reshape(shape)


def _check_finite(op: str, value: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(value)):
        raise NonFiniteError(f"{op} produced a non-finite value")
    return value


# ---------------------------------------------------------------------------
# elementwise primitives


def add(a: Operand, b: Operand):
    av, bv = _val(a), _val(b)
    _check_elementwise("add", av, bv)
    out = av + bv
    return _emit("add", out, (a, b), lambda g: (_unbroadcast(g, av.shape), _unbroadcast(g, bv.shape)))


def sub(a: Operand, b: Operand):
    av, bv = _val(a), _val(b)
    _check_elementwise("sub", av, bv)
    out = av - bv
    return _emit("sub", out, (a, b), lambda g: (_unbroadcast(g, av.shape), _unbroadcast(-g, bv.shape)))


def mul(a: Operand, b: Operand):
    av, bv = _val(a), _val(b)
    _check_elementwise("mul", av, bv)
    out = av * bv
    return _emit(
        "mul", out, (a, b), lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape))
    )


def div(a: Operand, b: Operand):
    av, bv = _val(a), _val(b)
    _check_elementwise("div", av, bv)
    if np.any(bv == 0.0):
        raise DomainError("div: division by zero")
    out = av / bv

    def vjp(g):
        return _unbroadcast(g / bv, av.shape), _unbroadcast(-g * av / (bv * bv), bv.shape)

    return _emit("div", out, (a, b), vjp)


def neg(a: Operand):
    av = _val(a)
    return _emit("neg", -av, (a,), lambda g: (-g,))


def square(a: Operand):
    av = _val(a)
    return _emit("square", av * av, (a,), lambda g: (2.0 * av * g,))


def sqrt(a: Operand):
    av = _val(a)
    if np.any(av < 0.0):
        raise DomainError("sqrt: negative operand")
    out = np.sqrt(av)

    def vjp(g):
        if np.any(out == 0.0):
            raise DomainError("sqrt: derivative undefined at 0")
        return (g / (2.0 * out),)

    return _emit("sqrt", out, (a,), vjp)


def exp(a: Operand):
    av = _val(a)
    with np.errstate(over="ignore"):
        out = _check_finite("exp", np.exp(av))
    return _emit("exp", out, (a,), lambda g: (g * out,))


def log(a: Operand):
    av = _val(a)
    if np.any(av <= 0.0):
        raise DomainError("log: non-positive operand")
    return _emit("log", np.log(av), (a,), lambda g: (g / av,))


def absolute(a: Operand):
    """|a| with subgradient sign(a), sign(0) = 0."""
    av = _val(a)
    return _emit("abs", np.abs(av), (a,), lambda g: (g * np.sign(av),))


def maximum(a: Operand, c: float):
    """max(a, c) against a constant; the derivative is 1 where a > c, else 0."""
    av = _val(a)
    c = float(c)
    mask = av > c
    out = np.where(mask, av, c)
    return _emit("maximum", out, (a,), lambda g: (g * mask,))


def clamp(a: Operand, lo: float | None = None, hi: float | None = None):
    av = _val(a)
    out = np.clip(av, lo, hi)
    mask = np.ones_like(av, dtype=bool)
    if lo is not None:
        mask &= av >= lo
    if hi is not None:
        mask &= av <= hi
    return _emit("clamp", out, (a,), lambda g: (g * mask,))


def relu(a: Operand):
    av = _val(a)
    mask = av > 0.0
    return _emit("relu", np.where(mask, av, 0.0), (a,), lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# reductions and shape


def sum(a: Operand, axis: int | None = None):  # noqa: A001 - mirrors numpy
    av = _val(a)
    out = np.asarray(av.sum(axis=axis))

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, av.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), av.shape).copy(),)

    return _emit("sum", out, (a,), vjp)


def mean(a: Operand, axis: int | None = None):
    av = _val(a)
    n = av.size if axis is None else av.shape[axis]
    if n == 0:
        raise ShapeError("mean of an empty array")
    out = np.asarray(av.mean(axis=axis))

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g / n, av.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g / n, axis), av.shape).copy(),)

    return _emit("mean", out, (a,), vjp)


def reshape(a: Operand, shape: tuple[int, ...]):
    av = _val(a)
    try:
        out = av.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: {exc}") from None
    return _emit("reshape", out, (a,), lambda g: (g.reshape(av.shape),))


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Operand, b: Operand):
    av, bv = _val(a), _val(b)
    if av.ndim not in (1, 2) or bv.ndim not in (1, 2):
        raise ShapeError("matmul supports 1-D and 2-D operands only")
    if av.shape[-1] != bv.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {av.shape} @ {bv.shape}")
    out = av @ bv

    def vjp(g):
        a2 = av.reshape(1, -1) if av.ndim == 1 else av
        b2 = bv.reshape(-1, 1) if bv.ndim == 1 else bv
        g2 = g.reshape(a2.shape[0], b2.shape[1])
        ga = (g2 @ b2.T).reshape(av.shape)
        gb = (a2.T @ g2).reshape(bv.shape)
        return ga, gb

    return _emit("matmul", out, (a, b), vjp)


def linear(x: Operand, weight: Operand, bias: Operand | None = None):
    """Affine map ``x @ weight.T + bias`` for x of shape (in,) or (batch, in).

    ``weight`` has shape (out, in), one row per output unit.
    """
    xv, wv = _val(x), _val(weight)
    if wv.ndim != 2 or xv.ndim not in (1, 2) or xv.shape[-1] != wv.shape[1]:
        raise ShapeError(f"linear: cannot apply weight {wv.shape} to input {xv.shape}")
    out = xv @ wv.T
    if bias is not None:
        bv = _val(bias)
        if bv.shape != (wv.shape[0],):
            raise ShapeError(f"linear: bias shape {bv.shape} != ({wv.shape[0]},)")
        out = out + bv

    def vjp(g):
        gx = g @ wv
        if xv.ndim == 1:
            gw = np.outer(g, xv)
            gb = g
        else:
            gw = g.T @ xv
            gb = g.sum(axis=0)
        return (gx, gw, gb) if bias is not None else (gx, gw)

    inputs = (x, weight, bias) if bias is not None else (x, weight)
    return _emit("linear", out, inputs, vjp)


def conv1d(x: Operand, kernel: Operand, bias: Operand | None = None):
    """Valid-mode, stride-1 cross-correlation.

    Shapes: ``x`` (..., c_in, L) and ``kernel`` (c_out, c_in, K) give
    (..., c_out, L - K + 1). A 1-D signal with a 1-D kernel is also accepted and
    gives a 1-D result.
    """
    xv, kv = _val(x), _val(kernel)
    flat = xv.ndim == 1 and kv.ndim == 1
    if flat:
        xv = xv.reshape(1, -1)
        kv = kv.reshape(1, 1, -1)
    if kv.ndim != 3 or xv.ndim < 2 or xv.shape[-2] != kv.shape[1]:
        raise ShapeError(f"conv1d: kernel {kv.shape} incompatible with input {xv.shape}")
    k = kv.shape[-1]
    length = xv.shape[-1]
    if k > length:
        raise ShapeError(f"conv1d: kernel length {k} exceeds signal length {length}")
    windows = sliding_window_view(xv, k, axis=-1)  # (..., c_in, L', K)
    out = np.einsum("...ctk,ock->...ot", windows, kv)
    if bias is not None:
        bv = _val(bias)
        if bv.shape != (kv.shape[0],):
            raise ShapeError(f"conv1d: bias shape {bv.shape} != ({kv.shape[0]},)")
        out = out + bv[:, None]
    if flat:
        out = out.reshape(-1)

    def vjp(g):
        g3 = g.reshape(1, -1) if flat else g
        w4 = windows.reshape((-1,) + windows.shape[-3:])
        gk = np.einsum("nctk,not->ock", w4, g3.reshape((-1,) + g3.shape[-2:]))
        gx = np.zeros_like(xv)
        n_out = g3.shape[-1]
        for j in range(k):
            gx[..., j : j + n_out] += np.einsum("...ot,oc->...ct", g3, kv[:, :, j])
        if flat:
            gx = gx.reshape(-1)
            gk = gk.reshape(-1)
        grads = (gx, gk)
        if bias is not None:
            grads += (g3.sum(axis=tuple(range(g3.ndim - 2)) + (g3.ndim - 1,)),)
        return grads

    inputs = (x, kernel, bias) if bias is not None else (x, kernel)
    return _emit("conv1d", out, inputs, vjp)


# ---------------------------------------------------------------------------
# losses


def softmax_cross_entropy(logits: Operand, labels):
    """Fused, numerically stable softmax + cross-entropy.

    ``logits`` of shape (k,) with an integer label gives the sample loss;
    shape (batch, k) with a label vector gives the batch mean.
    """
    zv = _val(logits)
    lab = np.asarray(labels, dtype=np.int64)
    if zv.ndim == 1:
        z2, lab2 = zv.reshape(1, -1), lab.reshape(1)
    elif zv.ndim == 2:
        z2, lab2 = zv, lab.reshape(-1)
    else:
        raise ShapeError("softmax_cross_entropy expects (k,) or (batch, k) logits")
    if lab2.shape[0] != z2.shape[0]:
        raise ShapeError("softmax_cross_entropy: one label per row required")
    if np.any(lab2 < 0) or np.any(lab2 >= z2.shape[1]):
        raise DomainError("softmax_cross_entropy: label out of range")
    shifted = z2 - z2.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(z2.shape[0])
    losses = logsumexp - shifted[rows, lab2]
    out = np.asarray(losses.mean())

    def vjp(g):
        probs = np.exp(shifted - logsumexp[:, None])
        probs[rows, lab2] -= 1.0
        return ((g * probs / z2.shape[0]).reshape(zv.shape),)

    return _emit("softmax_cross_entropy", out, (logits,), vjp)


# ---------------------------------------------------------------------------
# gradient checking


def grad_check(f: Callable[[Node], Node], x, h: float = 1e-5) -> float:
    """Largest relative disagreement between the tape gradient and central differences.

    The error per coordinate is ``|a - n| / max(1, |a|, |n|)``.
    """
    x = as_array(x)
    tape = Tape()
    leaf = tape.leaf(x)
    out = f(leaf)
    if not isinstance(out, Node) or out.tape is not tape:
        # f ignored its input: the function is constant in x
        analytic = np.zeros_like(x)
        value = float(_val(out).reshape(-1)[0])
    else:
        value = out.item()
        analytic = tape.backward(out)[leaf]
    if not np.isfinite(value):
        raise NonFiniteError("f is not finite at x")

    def probe(v: np.ndarray) -> float:
        res = float(_val(f(v)).reshape(-1)[0])
        if not np.isfinite(res):
            raise NonFiniteError("f is not finite at a probe point")
        return res

    numeric = np.empty_like(x)
    flat_x = x.reshape(-1)
    flat_n = numeric.reshape(-1)
    for i in range(flat_x.size):
        xp = flat_x.copy()
        xm = flat_x.copy()
        xp[i] += h
        xm[i] -= h
        flat_n[i] = (probe(xp.reshape(x.shape)) - probe(xm.reshape(x.shape))) / (2.0 * h)
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom)) if x.size else 0.0
