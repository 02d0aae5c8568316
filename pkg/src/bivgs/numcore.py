"""Dense float64 matrices and a small reverse-mode autodiff graph.

Matrices are plain 2-D ``numpy`` arrays of dtype float64. A :class:`Node`
wraps one such value and records how it was computed, so that
:func:`backward` can push gradients from a scalar loss back to every leaf
created with ``requires_grad=True``. Graphs are meant to be rebuilt for
every optimisation step.
"""
from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .errors import ContractError, DimensionError

Matrix = np.ndarray
VJP = Callable[[np.ndarray], np.ndarray]


def as_matrix(x, name: str = "matrix") -> Matrix:
    """Coerce ``x`` to a finite 2-D float64 array (scalars become 1x1)."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1)
    elif a.ndim != 2:
        raise DimensionError(f"{name}: expected 2-D data, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ContractError(f"{name}: contains non-finite entries")
    return a


class Node:
    """A value in the computation graph.

    ``parents`` holds ``(parent, vjp)`` pairs where ``vjp`` maps the gradient
    of this node to the gradient contribution of that parent.
    """

    __slots__ = ("value", "grad", "parents", "requires_grad", "needs_grad", "op")

    def __init__(self, value, parents: Iterable[tuple["Node", VJP]] = (),
                 requires_grad: bool = False, op: str = "leaf"):
        # interior values skip the finiteness scan; leaves are checked in constant()/parameter()
        if isinstance(value, np.ndarray) and value.ndim == 2:
            self.value = value.astype(np.float64, copy=False)
        else:
            self.value = as_matrix(value)
        self.grad: Matrix | None = None
        self.parents = tuple(parents)
        self.requires_grad = requires_grad
        self.needs_grad = requires_grad or any(p.needs_grad for p, _ in self.parents)
        self.op = op

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def item(self) -> float:
        if self.value.shape != (1, 1):
            raise ContractError(f"item() needs a 1x1 node, got {self.value.shape}")
        return float(self.value[0, 0])

    def __repr__(self) -> str:
        return f"Node(op={self.op!r}, shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    @property
    def T(self):
        return transpose(self)


def constant(x) -> Node:
    return Node(as_matrix(x), requires_grad=False, op="const")


def parameter(x) -> Node:
    return Node(as_matrix(x).copy(), requires_grad=True, op="param")


def _node(x) -> Node:
    if isinstance(x, Node):
        return x
    if np.isscalar(x):
        return constant(np.full((1, 1), float(x)))
    return constant(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    # row-vector (1 x c) and scalar (1 x 1) operands are broadcast over rows
    if g.shape == shape:
        return g
    if shape[0] == 1 and shape[1] == g.shape[1]:
        return g.sum(axis=0, keepdims=True)
    if shape == (1, 1):
        return np.array([[g.sum()]])
    raise DimensionError(f"cannot reduce gradient {g.shape} to {shape}")


def _check_broadcast(a: Node, b: Node, op: str) -> None:
    sa, sb = a.shape, b.shape
    ok = sa == sb or sb == (1, 1) or sa == (1, 1) or \
        (sb[0] == 1 and sb[1] == sa[1]) or (sa[0] == 1 and sa[1] == sb[1])
    if not ok:
        raise DimensionError(f"{op}: incompatible shapes {sa} and {sb}")


# ---------------------------------------------------------------- primitives

def matmul(a, b):
    """Matrix product. Plain arrays in give an array out; Nodes give a Node."""
    if not isinstance(a, Node) and not isinstance(b, Node):
        a, b = as_matrix(a, "a"), as_matrix(b, "b")
        if a.shape[1] != b.shape[0]:
            raise DimensionError(f"matmul: {a.shape} x {b.shape}")
        return a @ b
    a, b = _node(a), _node(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: {a.shape} x {b.shape}")
    av, bv = a.value, b.value
    return Node(av @ bv, [(a, lambda g: g @ bv.T), (b, lambda g: av.T @ g)], op="matmul")


def add(a, b) -> Node:
    a, b = _node(a), _node(b)
    _check_broadcast(a, b, "add")
    sa, sb = a.shape, b.shape
    return Node(a.value + b.value,
                [(a, lambda g: _unbroadcast(g, sa)), (b, lambda g: _unbroadcast(g, sb))],
                op="add")


def sub(a, b) -> Node:
    a, b = _node(a), _node(b)
    _check_broadcast(a, b, "sub")
    sa, sb = a.shape, b.shape
    return Node(a.value - b.value,
                [(a, lambda g: _unbroadcast(g, sa)), (b, lambda g: -_unbroadcast(g, sb))],
                op="sub")


def mul(a, b) -> Node:
    """Elementwise product with row/scalar broadcasting."""
    a, b = _node(a), _node(b)
    _check_broadcast(a, b, "mul")
    av, bv = a.value, b.value
    return Node(av * bv,
                [(a, lambda g: _unbroadcast(g * bv, av.shape)),
                 (b, lambda g: _unbroadcast(g * av, bv.shape))],
                op="mul")


def scale(a, s: float) -> Node:
    a = _node(a)
    s = float(s)
    return Node(a.value * s, [(a, lambda g: g * s)], op="scale")


def transpose(a) -> Node:
    a = _node(a)
    return Node(a.value.T.copy(), [(a, lambda g: g.T)], op="transpose")


def relu(a) -> Node:
    a = _node(a)
    mask = a.value > 0
    return Node(np.where(mask, a.value, 0.0), [(a, lambda g: g * mask)], op="relu")


def total(a) -> Node:
    """Sum of all entries, as a 1x1 node."""
    a = _node(a)
    shape = a.shape
    return Node(np.array([[a.value.sum()]]), [(a, lambda g: np.full(shape, g[0, 0]))], op="sum")


def mean(a) -> Node:
    a = _node(a)
    shape = a.shape
    n = a.value.size
    return Node(np.array([[a.value.sum() / n]]),
                [(a, lambda g: np.full(shape, g[0, 0] / n))], op="mean")


def diagonal(a) -> Node:
    """Main diagonal of a square node as an N x 1 column."""
    a = _node(a)
    n, m = a.shape
    if n != m:
        raise DimensionError(f"diagonal: matrix is {a.shape}, not square")

    def vjp(g):
        out = np.zeros((n, n))
        out[np.arange(n), np.arange(n)] = g[:, 0]
        return out

    return Node(np.diag(a.value).reshape(n, 1).copy(), [(a, vjp)], op="diagonal")


def _lse_rows(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=1, keepdims=True)
    return m + np.log(np.exp(x - m).sum(axis=1, keepdims=True))


def logsumexp_rows(a) -> Node:
    """Max-shifted log-sum-exp of every row, as an N x 1 column."""
    a = _node(a)
    if a.shape[1] == 0:
        raise ContractError("logsumexp_rows: rows are empty")
    out = _lse_rows(a.value)
    soft = np.exp(a.value - out)
    return Node(out, [(a, lambda g: g * soft)], op="logsumexp_rows")


def l2_normalize_rows(a, eps: float = 1e-12) -> Node:
    """Scale every row to unit Euclidean norm."""
    a = _node(a)
    norms = np.sqrt((a.value ** 2).sum(axis=1, keepdims=True))
    norms = np.maximum(norms, eps)
    y = a.value / norms

    def vjp(g):
        return (g - y * (g * y).sum(axis=1, keepdims=True)) / norms

    return Node(y, [(a, vjp)], op="l2_normalize_rows")


def stop_gradient(a) -> Node:
    """Copy of ``a``'s value that is a graph constant."""
    return constant(_node(a).value.copy())


def log_sum_exp(row) -> float:
    """Stable log(sum(exp(row))) for a 1-D sequence."""
    r = np.asarray(row, dtype=np.float64).ravel()
    if r.size == 0:
        raise ContractError("log_sum_exp: empty row")
    return float(_lse_rows(r.reshape(1, -1))[0, 0])


# ---------------------------------------------------------------- backward

def _topological(root: Node) -> list[Node]:
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
        for parent, _ in node.parents:
            if parent.needs_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Node) -> dict[Node, Matrix]:
    """Populate ``.grad`` on every reachable ``requires_grad`` leaf.

    Returns a mapping leaf -> gradient. Leaves used more than once receive
    the sum of their contributions.
    """
    if loss.shape != (1, 1):
        raise ContractError(f"backward needs a scalar (1x1) loss, got {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
    out: dict[Node, Matrix] = {}
    for node in reversed(_topological(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if not node.parents:
            if node.requires_grad:
                node.grad = g
                out[node] = g
            continue
        for parent, vjp in node.parents:
            if not parent.needs_grad:
                continue
            contrib = vjp(g)
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + contrib
            else:
                grads[key] = contrib
    return out


def numeric_gradient(f: Callable[[np.ndarray], float], x: np.ndarray,
                     step: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of scalar ``f`` at ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + step
        fp = f(x)
        x[idx] = orig - step
        fm = f(x)
        x[idx] = orig
        g[idx] = (fp - fm) / (2 * step)
    return g


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-12) -> float:
    """||a - b|| / max(||a||, ||b||, floor) in the Frobenius norm."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / denom)
