"""Reverse-mode differentiation over dense 2-D matrices.

Provides exactly the operations the hierarchical graph model needs: matrix
products, row/column concatenation, the activations, row softmax, selective
row means, convex combination, and cross-entropy on logits. No broadcasting,
no sparse storage, no views into mutable state: every operation produces a
fresh node whose value is treated as immutable.

The computation graph is rebuilt on every forward pass. Precision is a single
global switch (`set_precision`); values never mix dtypes within one graph.
"""

from __future__ import annotations

from typing import Callable, Iterable, Mapping, Sequence

import numpy as np


class DimensionError(ValueError):
    """Operand shapes violate an operation's precondition."""


class ContractError(ValueError):
    """An operation was used outside its published contract."""


_DTYPES = {"f32": np.float32, "f64": np.float64}
_dtype = np.float64


def set_precision(name: str) -> None:
    """Select the global value dtype: 'f32' or 'f64'."""
    global _dtype
    if name not in _DTYPES:
        raise ValueError(f"unknown precision {name!r}, expected 'f32' or 'f64'")
    _dtype = _DTYPES[name]


def precision() -> str:
    return "f32" if _dtype == np.float32 else "f64"


class Node:
    """One vertex of the computation graph.

    Holds the cached output value, references to the parent nodes, and the
    backward rule that maps an incoming gradient to per-parent gradients.
    Leaf nodes (parameters, constants) have no parents and no rule.
    """

    __slots__ = ("value", "op", "parents", "grad", "requires_grad", "name", "_vjp")

    def __init__(
        self,
        value: np.ndarray,
        op: str = "leaf",
        parents: tuple["Node", ...] = (),
        requires_grad: bool = False,
        vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None,
        name: str | None = None,
    ):
        self.value = value
        self.op = op
        self.parents = parents
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._vjp = vjp

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape  # type: ignore[return-value]

    def __repr__(self) -> str:
        tag = self.name or self.op
        return f"Node({tag}, shape={self.value.shape}, requires_grad={self.requires_grad})"


def _as_2d(x, dtype) -> np.ndarray:
    a = np.asarray(x, dtype=dtype)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise DimensionError(f"expected a 2-D value, got shape {a.shape}")
    return a


def parameter(value, name: str | None = None) -> Node:
    """Trainable leaf. The array is copied into the global precision."""
    return Node(_as_2d(value, _dtype).copy(), op="param", requires_grad=True, name=name)


def constant(value, name: str | None = None) -> Node:
    """Non-trainable leaf; gradients are never propagated into it."""
    return Node(_as_2d(value, _dtype), op="const", requires_grad=False, name=name)


def as_node(x) -> Node:
    return x if isinstance(x, Node) else constant(x)


def _make(value, op, parents, vjp) -> Node:
    req = any(p.requires_grad for p in parents)
    return Node(value, op=op, parents=parents, requires_grad=req, vjp=vjp if req else None)


# ---------------------------------------------------------------------------
# operations


def matmul(a: Node, b: Node) -> Node:
    a, b = as_node(a), as_node(b)
    if a.value.shape[1] != b.value.shape[0]:
        raise DimensionError(f"matmul: {a.value.shape} x {b.value.shape}")
    av, bv = a.value, b.value
    need_a, need_b = a.requires_grad, b.requires_grad

    def vjp(g):
        return (
            g @ bv.T if need_a else None,
            av.T @ g if need_b else None,
        )

    return _make(av @ bv, "matmul", (a, b), vjp)


def add(a: Node, b: Node) -> Node:
    a, b = as_node(a), as_node(b)
    if a.value.shape != b.value.shape:
        raise DimensionError(f"add: {a.value.shape} vs {b.value.shape}")

    def vjp(g):
        return (g, g)

    return _make(a.value + b.value, "add", (a, b), vjp)


def scale(x: Node, c: float) -> Node:
    x = as_node(x)
    c = float(c)

    def vjp(g):
        return (c * g,)

    return _make(c * x.value, "scale", (x,), vjp)


def transpose(x: Node) -> Node:
    x = as_node(x)

    def vjp(g):
        return (g.T,)

    return _make(x.value.T, "transpose", (x,), vjp)


def concat_cols(a: Node, b: Node) -> Node:
    a, b = as_node(a), as_node(b)
    if a.value.shape[0] != b.value.shape[0]:
        raise DimensionError(f"concat_cols: row mismatch {a.value.shape} vs {b.value.shape}")
    na = a.value.shape[1]

    def vjp(g):
        return (g[:, :na], g[:, na:])

    return _make(np.concatenate([a.value, b.value], axis=1), "concat_cols", (a, b), vjp)


def concat_rows(mats: Sequence[Node]) -> Node:
    """Stack matrices with equal column counts on top of each other."""
    nodes = tuple(as_node(m) for m in mats)
    if not nodes:
        raise DimensionError("concat_rows: empty input")
    cols = nodes[0].value.shape[1]
    for n in nodes[1:]:
        if n.value.shape[1] != cols:
            raise DimensionError(f"concat_rows: column mismatch {n.value.shape} vs cols={cols}")
    offsets = np.cumsum([0] + [n.value.shape[0] for n in nodes])

    def vjp(g):
        return tuple(g[offsets[i] : offsets[i + 1]] for i in range(len(nodes)))

    return _make(np.concatenate([n.value for n in nodes], axis=0), "concat_rows", nodes, vjp)


def slice_rows(x: Node, start: int, stop: int) -> Node:
    x = as_node(x)
    rows = x.value.shape[0]
    if not (0 <= start <= stop <= rows):
        raise DimensionError(f"slice_rows: [{start}:{stop}] out of range for {rows} rows")
    xv = x.value

    def vjp(g):
        out = np.zeros_like(xv)
        out[start:stop] = g
        return (out,)

    return _make(xv[start:stop].copy(), "slice_rows", (x,), vjp)


def leaky_relu(x: Node, slope: float) -> Node:
    x = as_node(x)
    if not (0.0 < slope < 1.0):
        raise ValueError(f"leaky_relu: slope must be in (0,1), got {slope}")
    xv = x.value
    # subgradient at 0 is the slope
    mask = xv > 0.0

    def vjp(g):
        return (np.where(mask, g, slope * g),)

    return _make(np.where(mask, xv, slope * xv), "leaky_relu", (x,), vjp)


def relu(x: Node) -> Node:
    x = as_node(x)
    xv = x.value

    def vjp(g):
        # subgradient at 0 is 0
        return (np.where(xv > 0.0, g, 0.0),)

    # maximum (unlike a mask select) propagates NaN, so corrupt inputs
    # surface as a non-finite loss instead of silently becoming 0
    return _make(np.maximum(xv, 0.0), "relu", (x,), vjp)


def softmax_rows(x: Node) -> Node:
    x = as_node(x)
    z = x.value - x.value.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=1, keepdims=True)

    def vjp(g):
        inner = (g * s).sum(axis=1, keepdims=True)
        return (s * (g - inner),)

    return _make(s, "softmax_rows", (x,), vjp)


def mean_rows(x: Node, row_indices: Iterable[int]) -> Node:
    """Arithmetic mean of the selected rows, as a 1 x cols matrix."""
    x = as_node(x)
    idx = np.asarray(list(row_indices), dtype=np.intp)
    if idx.size == 0:
        raise ValueError("mean_rows: empty row-index set")
    rows = x.value.shape[0]
    if idx.min() < 0 or idx.max() >= rows:
        raise DimensionError(f"mean_rows: index out of range for {rows} rows")
    xv = x.value
    inv = 1.0 / idx.size

    def vjp(g):
        out = np.zeros_like(xv)
        np.add.at(out, idx, inv * g)
        return (out,)

    return _make(xv[idx].mean(axis=0, keepdims=True), "mean_rows", (x,), vjp)


def affine_combine(a: Node, b: Node, beta: float) -> Node:
    """beta * a + (1 - beta) * b; at beta in {0, 1} the result is bit-exact."""
    a, b = as_node(a), as_node(b)
    if a.value.shape != b.value.shape:
        raise DimensionError(f"affine_combine: {a.value.shape} vs {b.value.shape}")
    beta = float(beta)
    if not (0.0 <= beta <= 1.0):
        raise ValueError(f"affine_combine: beta must be in [0,1], got {beta}")
    if beta == 1.0:
        value = a.value
    elif beta == 0.0:
        value = b.value
    else:
        value = beta * a.value + (1.0 - beta) * b.value

    def vjp(g):
        return (beta * g, (1.0 - beta) * g)

    return _make(value, "affine_combine", (a, b), vjp)


def cross_entropy_logits(logits: Node, label: int) -> Node:
    """Negative log-softmax of the labelled entry; logits are 1 x C."""
    logits = as_node(logits)
    if logits.value.shape[0] != 1:
        raise DimensionError(f"cross_entropy_logits: expected 1 x C logits, got {logits.value.shape}")
    n_classes = logits.value.shape[1]
    if not (0 <= label < n_classes):
        raise ValueError(f"cross_entropy_logits: label {label} out of range for {n_classes} classes")
    z = logits.value - logits.value.max()
    lse = np.log(np.exp(z).sum())
    loss = lse - z[0, label]
    probs = np.exp(z - lse)

    def vjp(g):
        out = probs.copy()
        out[0, label] -= 1.0
        return (g[0, 0] * out,)

    return _make(np.array([[loss]], dtype=logits.value.dtype), "cross_entropy", (logits,), vjp)


def sum_all(x: Node) -> Node:
    x = as_node(x)
    xv = x.value

    def vjp(g):
        return (np.full_like(xv, g[0, 0]),)

    return _make(np.array([[xv.sum()]], dtype=xv.dtype), "sum_all", (x,), vjp)


# ---------------------------------------------------------------------------
# backward pass


def _topo_order(root: Node) -> list[Node]:
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
            if id(p) not in seen:
                stack.append((p, False))
    return order  # parents precede children


def backward(loss: Node, params: Iterable[Node] | None = None) -> Mapping[Node, np.ndarray]:
    """Accumulate d(loss)/d(p) into `.grad` for every reachable node.

    `loss` must be 1 x 1. When `params` is given, every listed parameter is
    guaranteed a gradient afterwards (zeros if the loss does not depend on
    it), and the mapping parameter -> gradient is returned.
    """
    if loss.value.shape != (1, 1):
        raise ContractError(f"backward: loss must be a 1x1 scalar, got {loss.value.shape}")
    param_list = list(params) if params is not None else []
    order = _topo_order(loss)
    for node in order:
        node.grad = None
    for p in param_list:
        p.grad = None
    loss.grad = np.ones((1, 1), dtype=loss.value.dtype)
    for node in reversed(order):
        if node.grad is None or node._vjp is None:
            continue
        grads = node._vjp(node.grad)
        for parent, g in zip(node.parents, grads):
            if g is None or not parent.requires_grad:
                continue
            parent.grad = g if parent.grad is None else parent.grad + g
    result: dict[Node, np.ndarray] = {}
    for p in param_list:
        if p.grad is None:
            p.grad = np.zeros_like(p.value)
        result[p] = p.grad
    return result
