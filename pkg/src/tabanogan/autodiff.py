"""Reverse-mode automatic differentiation over float64 numpy arrays.

A :class:`Tape` records every operation in insertion order; that order is a
valid topological order, so :meth:`Tape.backward` simply walks the node list
in reverse.  Values are plain ``numpy.ndarray`` objects and the last axis is
the feature axis; any leading axes are batch axes.

Only what small MLPs, Gumbel activations and MSE losses need is provided.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

Array = np.ndarray


class TapeError(RuntimeError):
    """Raised for malformed graphs (foreign nodes, non-scalar losses)."""


class DivergenceError(FloatingPointError):
    """Raised when an optimizer step produces NaN or Inf parameters."""


def _as_array(value) -> Array:
    return np.asarray(value, dtype=np.float64)


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Node:
    """One recorded value on a tape."""

    __slots__ = ("tape", "index", "value", "parents", "backward_fn", "requires_grad", "op")

    def __init__(self, tape: "Tape", value: Array, parents: tuple["Node", ...],
                 backward_fn: Callable[[Array], tuple[Array | None, ...]] | None,
                 requires_grad: bool, op: str):
        self.tape = tape
        self.value = value
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad
        self.op = op
        self.index = -1

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Node(op={self.op!r}, index={self.index}, shape={self.shape})"

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

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Node):
            raise TypeError("division by a Node is not supported")
        return mul(self, 1.0 / float(other))

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    """Append-only record of operations.

    Leaves are created with :meth:`variable` (tracked, receives a gradient) or
    :meth:`constant`.  Every op function in this module appends its result.
    """

    def __init__(self):
        self.nodes: list[Node] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def _append(self, node: Node) -> Node:
        node.index = len(self.nodes)
        self.nodes.append(node)
        return node

    def variable(self, value, requires_grad: bool = True) -> Node:
        return self._append(Node(self, _as_array(value), (), None, requires_grad, "leaf"))

    def constant(self, value) -> Node:
        return self.variable(value, requires_grad=False)

    def record(self, value: Array, parents: Sequence[Node],
               backward_fn: Callable[[Array], tuple[Array | None, ...]], op: str) -> Node:
        for p in parents:
            if p.tape is not self:
                raise TapeError(f"{op}: operand belongs to a different tape")
            if p.index < 0 or p.index >= len(self.nodes) or self.nodes[p.index] is not p:
                raise TapeError(f"{op}: operand referenced before definition")
        requires_grad = any(p.requires_grad for p in parents)
        return self._append(Node(self, value, tuple(parents), backward_fn, requires_grad, op))

    def backward(self, loss: Node) -> dict[Node, Array]:
        """Gradients of a scalar ``loss`` with respect to every tracked leaf.

        Contributions from multiple uses of a node are summed.  Leaves that do
        not influence the loss get a zero gradient.
        """
        if not isinstance(loss, Node) or loss.tape is not self:
            raise TapeError("loss is not a node of this tape")
        if loss.value.size != 1:
            raise TapeError(f"loss must be scalar, got shape {loss.shape}")
        grads: dict[int, Array] = {loss.index: np.ones_like(loss.value)}
        for node in reversed(self.nodes[: loss.index + 1]):
            g = grads.get(node.index)
            if g is None or node.backward_fn is None:
                continue
            parent_grads = node.backward_fn(g)
            for parent, pg in zip(node.parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                pg = _unbroadcast(pg, parent.value.shape)
                if parent.index in grads:
                    grads[parent.index] = grads[parent.index] + pg
                else:
                    grads[parent.index] = pg
        out: dict[Node, Array] = {}
        for node in self.nodes:
            if node.parents or not node.requires_grad:
                continue
            out[node] = grads.get(node.index, np.zeros_like(node.value))
        return out


def _lift(tape: Tape, x) -> Node:
    if isinstance(x, Node):
        return x
    return tape.constant(x)


def _tape_of(*xs) -> Tape:
    for x in xs:
        if isinstance(x, Node):
            return x.tape
    raise TapeError("at least one operand must be a Node")


# ---------------------------------------------------------------- arithmetic

def add(a, b) -> Node:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    return tape.record(a.value + b.value, (a, b), lambda g: (g, g), "add")


def sub(a, b) -> Node:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    return tape.record(a.value - b.value, (a, b), lambda g: (g, -g), "sub")


def mul(a, b) -> Node:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    av, bv = a.value, b.value
    return tape.record(av * bv, (a, b), lambda g: (g * bv, g * av), "mul")


def matmul(x: Node, w) -> Node:
    """``x @ w`` where ``x`` has shape (..., k) and ``w`` has shape (k, n).

    Stacked (3-D) inputs are multiplied slice by slice, which keeps every
    slice's result independent of how many slices are in the stack.
    """
    tape = _tape_of(x, w)
    x, w = _lift(tape, x), _lift(tape, w)
    xv, wv = x.value, w.value
    if wv.ndim != 2 or xv.shape[-1] != wv.shape[0]:
        raise ValueError(f"matmul: cannot multiply {xv.shape} by {wv.shape}")

    def backward(g):
        gx = g @ wv.T if x.requires_grad else None
        gw = None
        if w.requires_grad:
            gw = xv.reshape(-1, xv.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return gx, gw

    return tape.record(xv @ wv, (x, w), backward, "matmul")


def linear_forward(x, weights, bias) -> Node:
    """Affine map ``x @ W + b``; ``W`` is stored (in_features, out_features)."""
    tape = _tape_of(x, weights, bias)
    x, weights, bias = _lift(tape, x), _lift(tape, weights), _lift(tape, bias)
    if bias.value.shape != (weights.value.shape[1],):
        raise ValueError(f"linear: bias shape {bias.value.shape} does not match weights {weights.value.shape}")
    return add(matmul(x, weights), bias)


def sum_all(x: Node) -> Node:
    shape = x.value.shape
    return x.tape.record(np.asarray(x.value.sum()), (x,), lambda g: (np.broadcast_to(g, shape),), "sum")


def sum_last(x: Node) -> Node:
    """Sum over the last axis, keeping it as a length-1 axis."""
    shape = x.value.shape
    return x.tape.record(x.value.sum(axis=-1, keepdims=True), (x,),
                         lambda g: (np.broadcast_to(g, shape),), "sum_last")


def mean_all(x: Node) -> Node:
    n = x.value.size
    shape = x.value.shape
    return x.tape.record(np.asarray(x.value.mean()), (x,),
                         lambda g: (np.broadcast_to(g / n, shape),), "mean")


# ------------------------------------------------------------ elementwise

def relu(x: Node) -> Node:
    mask = x.value > 0
    return x.tape.record(np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,), "relu")


def leaky_relu(x: Node, slope: float = 0.2) -> Node:
    scale = np.where(x.value > 0, 1.0, slope)
    return x.tape.record(x.value * scale, (x,), lambda g: (g * scale,), "leaky_relu")


def tanh(x: Node) -> Node:
    y = np.tanh(x.value)
    return x.tape.record(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")


def sigmoid(x: Node) -> Node:
    y = _sigmoid(x.value)
    return x.tape.record(y, (x,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def softplus(x: Node) -> Node:
    """``log(1 + exp(x))`` computed without overflow."""
    v = x.value
    y = np.maximum(v, 0.0) + np.log1p(np.exp(-np.abs(v)))
    return x.tape.record(y, (x,), lambda g: (g * _sigmoid(v),), "softplus")


def exp(x: Node) -> Node:
    y = np.exp(x.value)
    return x.tape.record(y, (x,), lambda g: (g * y,), "exp")


def log(x: Node) -> Node:
    v = x.value
    return x.tape.record(np.log(v), (x,), lambda g: (g / v,), "log")


def softmax(x: Node) -> Node:
    """Softmax over the last axis (max-subtracted)."""
    y = _softmax(x.value)

    def backward(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return x.tape.record(y, (x,), backward, "softmax")


def _sigmoid(v: Array) -> Array:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _softmax(v: Array) -> Array:
    shifted = v - v.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


# ------------------------------------------------------------ structural

def take(x: Node, indices) -> Node:
    """Select ``indices`` along the last axis."""
    idx = np.asarray(indices, dtype=np.intp)
    shape = x.value.shape

    def backward(g):
        out = np.zeros(shape)
        np.add.at(out, (..., idx), g)
        return (out,)

    return x.tape.record(x.value[..., idx], (x,), backward, "take")


def slice_last(x: Node, start: int, stop: int) -> Node:
    shape = x.value.shape

    def backward(g):
        out = np.zeros(shape)
        out[..., start:stop] = g
        return (out,)

    return x.tape.record(x.value[..., start:stop], (x,), backward, "slice")


def concat(parts: Sequence[Node]) -> Node:
    """Concatenate along the last axis."""
    tape = _tape_of(*parts)
    parts = [_lift(tape, p) for p in parts]
    widths = [p.value.shape[-1] for p in parts]
    bounds = np.cumsum([0] + widths)

    def backward(g):
        return tuple(g[..., bounds[i]:bounds[i + 1]] for i in range(len(parts)))

    return tape.record(np.concatenate([p.value for p in parts], axis=-1), parts, backward, "concat")


def reshape(x: Node, shape) -> Node:
    old = x.value.shape
    return x.tape.record(x.value.reshape(shape), (x,), lambda g: (g.reshape(old),), "reshape")


def stop_gradient(x: Node) -> Node:
    return x.tape.record(x.value, (x,), lambda g: (None,), "stop_gradient")


def straight_through(forward_value, soft: Node) -> Node:
    """Value of ``stop_gradient(forward_value - soft) + soft`` with exact forward.

    Written as one op so the forward value is ``forward_value`` bit for bit;
    the expanded expression can be off by one ulp in the 1-entries.
    """
    fv = np.asarray(forward_value, dtype=np.float64)
    if fv.shape != soft.value.shape:
        raise ValueError(f"straight_through: shape {fv.shape} != {soft.value.shape}")
    return soft.tape.record(fv, (soft,), lambda g: (g,), "straight_through")


# ------------------------------------------------------------ losses

def mse(a, b) -> Node:
    """Mean of squared element-wise differences, as a scalar node."""
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    if a.value.shape != b.value.shape:
        raise ValueError(f"mse: shape mismatch {a.value.shape} vs {b.value.shape}")
    return mean_all(mul(sub(a, b), sub(a, b)))


def row_mse(a: Node, target: Array) -> Node:
    """Per-row MSE against a constant target, reduced over the last axis.

    Result has shape ``a.shape[:-1]``; gradients flow to ``a`` only.
    """
    av = a.value
    diff = av - target
    width = av.shape[-1]
    return a.tape.record((diff * diff).mean(axis=-1), (a,),
                         lambda g: (g[..., None] * (2.0 / width) * diff,), "row_mse")


def mse_value(a, b) -> float:
    """Plain-array MSE; symmetric and exactly zero for equal inputs."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"mse: shape mismatch {a.shape} vs {b.shape}")
    d = a - b
    return float(np.mean(d * d))


# ------------------------------------------------------------ optimizer

@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[Array] = field(default_factory=list)
    v: list[Array] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[Array], lr: float = 1e-3, beta1: float = 0.9,
                   beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps,
                   m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params])


def adam_step(params: Sequence[Array], grads: Sequence[Array], state: AdamState,
              mask: Sequence[Array | None] | None = None, check_finite: bool = True) -> list[Array]:
    """One bias-corrected Adam update.

    Returns new parameter arrays; ``state`` is advanced in place.  ``mask``
    optionally freezes entries (both the parameter and its moments).  With
    ``check_finite`` a NaN/Inf parameter raises :class:`DivergenceError`.
    """
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if not (len(params) == len(grads) == len(state.m)):
        raise ValueError("adam_step: parameter, gradient and state counts differ")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape or p.shape != state.m[i].shape:
            raise ValueError(f"adam_step: shape mismatch at parameter {i}: {p.shape} vs {g.shape}")
        m = b1 * state.m[i] + (1.0 - b1) * g
        v = b2 * state.v[i] + (1.0 - b2) * (g * g)
        update = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        new_p = p - update
        keep = None if mask is None else mask[i]
        if keep is not None:
            m = np.where(keep, m, state.m[i])
            v = np.where(keep, v, state.v[i])
            new_p = np.where(keep, new_p, p)
        if check_finite and not np.all(np.isfinite(new_p)):
            raise DivergenceError(f"non-finite parameter after Adam step {t} (parameter {i})")
        state.m[i] = m
        state.v[i] = v
        out.append(new_p)
    return out
