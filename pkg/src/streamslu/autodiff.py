"""Reverse-mode automatic differentiation on dense float64 matrices.

Everything lives in 2-D: row vectors are (1, n), scalars (1, 1). Graphs are
built define-by-run, one per training sequence, and backward() walks them
once. Gradients accumulate additively into `.grad`, so a parameter used at
many time steps (weight sharing) collects the sum of all contributions, and
several sequence graphs sharing the same parameter leaves accumulate a batch
gradient until `zero_grads` is called.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np


class DimensionError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class GraphReuseError(RuntimeError):
    """backward() was invoked twice on the same graph without a rebuild."""


# ---------------------------------------------------------------------------
# Log-space scalar helpers (shared by the graph ops and the CTC recursions)
# ---------------------------------------------------------------------------

NEG_INF = -np.inf


def logsumexp(xs) -> float:
    """log(sum(exp(xs))) with the max-shift trick.

    -inf entries act as absent terms; an all--inf input returns -inf.
    """
    xs = np.asarray(xs, dtype=np.float64)
    if xs.size == 0:
        raise DimensionError("logsumexp of an empty vector")
    m = np.max(xs)
    if m == NEG_INF:
        return NEG_INF
    return float(m + np.log(np.sum(np.exp(xs - m))))


def log_softmax(row) -> np.ndarray:
    """Normalize a vector of scores to log-probabilities (overflow-safe)."""
    row = np.asarray(row, dtype=np.float64)
    if row.size == 0:
        raise DimensionError("log_softmax of an empty vector")
    m = np.max(row)
    shifted = row - m
    return shifted - np.log(np.sum(np.exp(shifted)))


# ---------------------------------------------------------------------------
# Graph node
# ---------------------------------------------------------------------------


class Node:
    """One vertex of the computation graph.

    `value` is a (rows, cols) float64 array; `grad` has the same shape and is
    only allocated when the node participates in differentiation. Custom ops
    (e.g. a fused recurrent layer) construct Nodes directly by passing
    `parents` and a `backward` closure that scatters `self.grad` into
    `parent.grad` for every parent with `requires_grad`.
    """

    __slots__ = ("value", "grad", "parents", "requires_grad", "_backward", "_backward_ran")

    def __init__(
        self,
        value,
        parents: tuple["Node", ...] = (),
        backward: Callable[[], None] | None = None,
        requires_grad: bool | None = None,
    ):
        value = np.asarray(value, dtype=np.float64)
        if value.ndim != 2:
            raise DimensionError(f"Node value must be 2-D, got shape {value.shape}")
        self.value = value
        self.parents = parents
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p in parents)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(value) if requires_grad else None
        self._backward = backward
        self._backward_ran = False

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def __repr__(self) -> str:
        kind = "param" if (self.requires_grad and not self.parents) else "node"
        return f"<{kind} {self.value.shape[0]}x{self.value.shape[1]}>"


def constant(value) -> Node:
    """Leaf that never receives a gradient (inputs, masks)."""
    return Node(value, requires_grad=False)


def parameter(value) -> Node:
    """Trainable leaf with a persistent, accumulating gradient buffer."""
    return Node(value, requires_grad=True)


def zero_grads(params: Iterable[Node]) -> None:
    for p in params:
        if p.grad is not None:
            p.grad[...] = 0.0


def _toposort(root: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Node) -> None:
    """Populate gradients of every reachable differentiable node.

    `loss` must be scalar (1x1). Calling backward a second time on the same
    graph raises GraphReuseError; rebuild the graph instead.
    """
    if loss.value.shape != (1, 1):
        raise DimensionError(f"backward needs a 1x1 loss, got {loss.value.shape}")
    if loss._backward_ran:
        raise GraphReuseError("backward() already ran on this graph; rebuild it")
    loss._backward_ran = True
    if not loss.requires_grad:
        return
    order = _toposort(loss)
    loss.grad[0, 0] += 1.0
    for node in reversed(order):
        if node._backward is not None:
            node._backward()


# ---------------------------------------------------------------------------
# Primitive operations
# ---------------------------------------------------------------------------


def affine(x: Node, w: Node, b: Node) -> Node:
    """x @ w + b with b a (1, cols) row broadcast over the rows of x."""
    if x.value.shape[1] != w.value.shape[0]:
        raise DimensionError(
            f"affine: x has shape {x.value.shape}, w has shape {w.value.shape}"
        )
    if b.value.shape != (1, w.value.shape[1]):
        raise DimensionError(
            f"affine: bias shape {b.value.shape} does not match w cols {w.value.shape[1]}"
        )
    out = Node(x.value @ w.value + b.value, parents=(x, w, b))

    def _bwd():
        g = out.grad
        if x.requires_grad:
            x.grad += g @ w.value.T
        if w.requires_grad:
            w.grad += x.value.T @ g
        if b.requires_grad:
            b.grad += g.sum(axis=0, keepdims=True)

    out._backward = _bwd
    return out


def matmul(a: Node, b: Node) -> Node:
    if a.value.shape[1] != b.value.shape[0]:
        raise DimensionError(f"matmul: {a.value.shape} @ {b.value.shape}")
    out = Node(a.value @ b.value, parents=(a, b))

    def _bwd():
        g = out.grad
        if a.requires_grad:
            a.grad += g @ b.value.T
        if b.requires_grad:
            b.grad += a.value.T @ g

    out._backward = _bwd
    return out


def add(a: Node, b: Node) -> Node:
    """Elementwise sum; also accepts a (1, n) row for b, broadcast over rows."""
    if a.value.shape != b.value.shape and not (
        b.value.shape == (1, a.value.shape[1])
    ):
        raise DimensionError(f"add: {a.value.shape} + {b.value.shape}")
    out = Node(a.value + b.value, parents=(a, b))

    def _bwd():
        g = out.grad
        if a.requires_grad:
            a.grad += g
        if b.requires_grad:
            if b.value.shape == g.shape:
                b.grad += g
            else:
                b.grad += g.sum(axis=0, keepdims=True)

    out._backward = _bwd
    return out


def mul(a: Node, b: Node) -> Node:
    if a.value.shape != b.value.shape:
        raise DimensionError(f"mul: {a.value.shape} * {b.value.shape}")
    out = Node(a.value * b.value, parents=(a, b))

    def _bwd():
        g = out.grad
        if a.requires_grad:
            a.grad += g * b.value
        if b.requires_grad:
            b.grad += g * a.value

    out._backward = _bwd
    return out


def scale(a: Node, c: float) -> Node:
    out = Node(a.value * c, parents=(a,))

    def _bwd():
        if a.requires_grad:
            a.grad += out.grad * c

    out._backward = _bwd
    return out


def sigmoid(a: Node) -> Node:
    y = 1.0 / (1.0 + np.exp(-a.value))
    out = Node(y, parents=(a,))

    def _bwd():
        if a.requires_grad:
            a.grad += out.grad * y * (1.0 - y)

    out._backward = _bwd
    return out


def tanh(a: Node) -> Node:
    y = np.tanh(a.value)
    out = Node(y, parents=(a,))

    def _bwd():
        if a.requires_grad:
            a.grad += out.grad * (1.0 - y * y)

    out._backward = _bwd
    return out


def slice_cols(a: Node, lo: int, hi: int) -> Node:
    out = Node(a.value[:, lo:hi].copy(), parents=(a,))

    def _bwd():
        if a.requires_grad:
            a.grad[:, lo:hi] += out.grad

    out._backward = _bwd
    return out


def take_row(a: Node, t: int) -> Node:
    out = Node(a.value[t : t + 1].copy(), parents=(a,))

    def _bwd():
        if a.requires_grad:
            a.grad[t] += out.grad[0]

    out._backward = _bwd
    return out


def concat_rows(nodes: Sequence[Node]) -> Node:
    if not nodes:
        raise DimensionError("concat_rows of an empty sequence")
    out = Node(np.vstack([n.value for n in nodes]), parents=tuple(nodes))

    def _bwd():
        r = 0
        for n in nodes:
            k = n.value.shape[0]
            if n.requires_grad:
                n.grad += out.grad[r : r + k]
            r += k

    out._backward = _bwd
    return out


def log_softmax_rows(a: Node) -> Node:
    """Row-wise log_softmax; each output row is a log-distribution."""
    v = a.value
    m = v.max(axis=1, keepdims=True)
    shifted = v - m
    y = shifted - np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
    out = Node(y, parents=(a,))

    def _bwd():
        if a.requires_grad:
            g = out.grad
            a.grad += g - np.exp(y) * g.sum(axis=1, keepdims=True)

    out._backward = _bwd
    return out


def sum_all(a: Node) -> Node:
    out = Node([[a.value.sum()]], parents=(a,))

    def _bwd():
        if a.requires_grad:
            a.grad += out.grad[0, 0]

    out._backward = _bwd
    return out


def pick(a: Node, i: int, j: int) -> Node:
    out = Node([[a.value[i, j]]], parents=(a,))

    def _bwd():
        if a.requires_grad:
            a.grad[i, j] += out.grad[0, 0]

    out._backward = _bwd
    return out


def neg(a: Node) -> Node:
    return scale(a, -1.0)


# ---------------------------------------------------------------------------
# Finite-difference validation harness
# ---------------------------------------------------------------------------


def grad_check(
    f: Callable[[], Node],
    params: Sequence[Node],
    eps: float = 1e-5,
    max_entries_per_param: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    `f` rebuilds the scalar loss graph from the current parameter values on
    every call. Error per entry is |analytic - numeric| / max(1, |analytic|,
    |numeric|). `max_entries_per_param` limits the probed entries per tensor
    (all entries when None); sampling is drawn from `rng`.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    zero_grads(params)
    root = f()
    if not np.isfinite(root.value).all():
        raise ValueError("grad_check: function value is not finite")
    backward(root)
    analytic = [p.grad.copy() for p in params]

    if max_entries_per_param is not None and rng is None:
        rng = np.random.default_rng(0)

    worst = 0.0
    for p, ana in zip(params, analytic):
        flat = p.value.reshape(-1)
        ana_flat = ana.reshape(-1)
        if max_entries_per_param is None or flat.size <= max_entries_per_param:
            idxs = range(flat.size)
        else:
            idxs = rng.choice(flat.size, size=max_entries_per_param, replace=False)
        for k in idxs:
            orig = flat[k]
            flat[k] = orig + eps
            fp = float(f().value[0, 0])
            flat[k] = orig - eps
            fm = float(f().value[0, 0])
            flat[k] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise ValueError("grad_check: perturbed function value is not finite")
            numeric = (fp - fm) / (2.0 * eps)
            err = abs(ana_flat[k] - numeric) / max(1.0, abs(ana_flat[k]), abs(numeric))
            worst = max(worst, err)
    return worst
