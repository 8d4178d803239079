"""Reverse-mode automatic differentiation over float64 numpy arrays.

A Node wraps one value in the computation graph; ops build fresh Nodes and
record a backward closure. Everything is deterministic: fixed reduction
orders, no threading, float64 throughout. Non-finite values (NaN/Inf) are an
error state and are rejected after every op unless FORMQUERY_CHECK_FINITE=0.
"""

import os

import numpy as np

from . import kernels

# Additive attention-mask value: large enough that exp underflows to exactly
# zero after row-max subtraction, small enough to stay finite.
NEG_INF = -1e30

CHECK_FINITE = os.environ.get("FORMQUERY_CHECK_FINITE", "1") != "0"


class ShapeError(ValueError):
    """Operand shapes violate an op's contract."""


class GraphError(RuntimeError):
    """Misuse of the graph API (e.g. backward on a non-scalar)."""


class NotFiniteError(FloatingPointError):
    """A tensor left the finite domain."""


def _as_f64(x):
    arr = np.asarray(x, dtype=np.float64)
    return arr


def _check(value, op):
    if CHECK_FINITE and not np.all(np.isfinite(value)):
        raise NotFiniteError(f"non-finite values after op {op!r}")
    return value


class Node:
    """One tensor in the graph: a float64 value plus backward bookkeeping."""

    __slots__ = ("value", "op", "parents", "grad", "requires_grad", "_backward")

    def __init__(self, value, op="leaf", parents=(), requires_grad=False, backward=None):
        self.value = _check(_as_f64(value), op)
        self.op = op
        self.parents = tuple(parents)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node(op={self.op!r}, shape={self.value.shape})"

    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, _wrap(other))


def param(value) -> Node:
    """Trainable leaf."""
    return Node(value, op="param", requires_grad=True)


def const(value) -> Node:
    """Non-trainable leaf."""
    return Node(value, op="const")


def _wrap(x):
    return x if isinstance(x, Node) else const(x)


def _accum(node, g):
    if not node.requires_grad:
        return
    if node.grad is None:
        node.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        node.grad += g


def _unbroadcast(g, shape):
    """Sum g down to `shape` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# --- elementwise and structural ops -----------------------------------------


def add(a: Node, b: Node) -> Node:
    out = Node(a.value + b.value, op="add", parents=(a, b))

    def bwd(g):
        _accum(a, _unbroadcast(g, a.value.shape))
        _accum(b, _unbroadcast(g, b.value.shape))

    out._backward = bwd
    return out


def sub(a: Node, b: Node) -> Node:
    out = Node(a.value - b.value, op="sub", parents=(a, b))

    def bwd(g):
        _accum(a, _unbroadcast(g, a.value.shape))
        _accum(b, _unbroadcast(-g, b.value.shape))

    out._backward = bwd
    return out


def mul(a: Node, b: Node) -> Node:
    out = Node(a.value * b.value, op="mul", parents=(a, b))

    def bwd(g):
        _accum(a, _unbroadcast(g * b.value, a.value.shape))
        _accum(b, _unbroadcast(g * a.value, b.value.shape))

    out._backward = bwd
    return out


def scale(a: Node, s: float) -> Node:
    s = float(s)
    out = Node(a.value * s, op="scale", parents=(a,))

    def bwd(g):
        _accum(a, g * s)

    out._backward = bwd
    return out


def matmul(a: Node, b: Node) -> Node:
    """Matrix product; leading dims broadcast as in numpy.matmul."""
    if a.value.ndim < 2 or b.value.ndim < 2:
        raise ShapeError("matmul operands must be at least 2-D")
    if a.value.shape[-1] != b.value.shape[-2]:
        raise ShapeError(
            f"matmul inner dimensions differ: {a.value.shape} @ {b.value.shape}"
        )
    out = Node(np.matmul(a.value, b.value), op="matmul", parents=(a, b))

    def bwd(g):
        ga = np.matmul(g, np.swapaxes(b.value, -1, -2))
        gb = np.matmul(np.swapaxes(a.value, -1, -2), g)
        _accum(a, _unbroadcast(ga, a.value.shape))
        _accum(b, _unbroadcast(gb, b.value.shape))

    out._backward = bwd
    return out


def transpose_last2(a: Node) -> Node:
    out = Node(np.swapaxes(a.value, -1, -2), op="transpose", parents=(a,))

    def bwd(g):
        _accum(a, np.swapaxes(g, -1, -2))

    out._backward = bwd
    return out


def reshape(a: Node, shape) -> Node:
    out = Node(a.value.reshape(shape), op="reshape", parents=(a,))

    def bwd(g):
        _accum(a, g.reshape(a.value.shape))

    out._backward = bwd
    return out


def moveaxis(a: Node, src: int, dst: int) -> Node:
    out = Node(np.moveaxis(a.value, src, dst).copy(), op="moveaxis", parents=(a,))

    def bwd(g):
        _accum(a, np.moveaxis(g, dst, src))

    out._backward = bwd
    return out


def sum_all(a: Node) -> Node:
    out = Node(a.value.sum(), op="sum", parents=(a,))

    def bwd(g):
        _accum(a, np.broadcast_to(g, a.value.shape))

    out._backward = bwd
    return out


def mean_all(a: Node) -> Node:
    n = a.value.size
    out = Node(a.value.mean(), op="mean", parents=(a,))

    def bwd(g):
        _accum(a, np.broadcast_to(g / n, a.value.shape))

    out._backward = bwd
    return out


# --- nonlinearities ----------------------------------------------------------


def softmax_rows(a: Node) -> Node:
    """Softmax over the last axis; rows sum to 1."""
    p = kernels.softmax_rows(a.value)
    out = Node(p, op="softmax_rows", parents=(a,))

    def bwd(g):
        _accum(a, kernels.softmax_rows_bwd(p, g))

    out._backward = bwd
    return out


_SIG_LO = np.nextafter(0.0, 1.0)
_SIG_HI = np.nextafter(1.0, 0.0)


def sigmoid(a: Node) -> Node:
    """Elementwise logistic function, computed branch-stably.

    Outputs are clamped to the nearest representable doubles inside (0,1);
    the exact value is always interior, hitting 0.0/1.0 is only rounding.
    """
    x = a.value
    s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                 np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    s = np.clip(s, _SIG_LO, _SIG_HI)
    out = Node(s, op="sigmoid", parents=(a,))

    def bwd(g):
        _accum(a, g * s * (1.0 - s))

    out._backward = bwd
    return out


def gelu(a: Node) -> Node:
    y = kernels.gelu(a.value)
    out = Node(y, op="gelu", parents=(a,))

    def bwd(g):
        _accum(a, kernels.gelu_bwd(g, a.value))

    out._backward = bwd
    return out


def layer_norm(a: Node, gain: Node, bias: Node, eps: float = 1e-5) -> Node:
    """Layer normalization over the last axis with learned gain and bias."""
    y, mu, rstd = kernels.layernorm_rows(a.value, gain.value, bias.value, eps)
    out = Node(y, op="layer_norm", parents=(a, gain, bias))

    def bwd(g):
        dx, dgain, dbias = kernels.layernorm_rows_bwd(g, a.value, gain.value, mu, rstd)
        _accum(a, dx)
        _accum(gain, dgain)
        _accum(bias, dbias)

    out._backward = bwd
    return out


def take_rows(table: Node, ids: np.ndarray) -> Node:
    """Gather rows of a 2-D table; output shape ids.shape + (width,).

    Backward scatter-adds into the table, so repeated ids accumulate.
    """
    if table.value.ndim != 2:
        raise ShapeError("take_rows expects a 2-D table")
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.value.shape[0]):
        raise ShapeError("take_rows index out of range")
    out = Node(table.value[ids], op="take_rows", parents=(table,))

    def bwd(g):
        if table.requires_grad:
            if table.grad is None:
                table.grad = np.zeros_like(table.value)
            kernels.scatter_add_rows(table.grad, ids, g)

    out._backward = bwd
    return out


# --- losses ------------------------------------------------------------------


def bce_loss(s: Node, y) -> Node:
    """Mean binary cross entropy of probabilities s in (0,1) against labels y."""
    yv = _as_f64(y.value if isinstance(y, Node) else y)
    if s.value.size == 0:
        raise ShapeError("bce_loss on empty input")
    if s.value.shape != yv.shape:
        raise ShapeError(f"bce_loss shape mismatch: {s.value.shape} vs {yv.shape}")
    sv = s.value
    n = sv.size
    val = -(yv * np.log(sv) + (1.0 - yv) * np.log(1.0 - sv)).mean()
    out = Node(val, op="bce_loss", parents=(s,))

    def bwd(g):
        _accum(s, g * (-(yv / sv) + (1.0 - yv) / (1.0 - sv)) / n)

    out._backward = bwd
    return out


def sigmoid_bce_masked(logits: Node, y, mask) -> Node:
    """BCE of sigmoid(logits) against y, averaged over mask per row then over
    rows. Computed from logits for stability; gradient is (p - y) * weight."""
    z = logits.value
    yv = _as_f64(y)
    mv = _as_f64(mask)
    counts = mv.sum(axis=-1)
    if np.any(counts == 0):
        raise ShapeError("sigmoid_bce_masked: a row has no unmasked positions")
    rows = z.shape[:-1]
    nrows = int(np.prod(rows)) if rows else 1
    elem = np.maximum(z, 0.0) - z * yv + np.log1p(np.exp(-np.abs(z)))
    val = ((elem * mv).sum(axis=-1) / counts).sum() / nrows
    out = Node(val, op="sigmoid_bce", parents=(logits,))

    def bwd(g):
        p = 1.0 / (1.0 + np.exp(-np.abs(z)))
        p = np.where(z >= 0, p, 1.0 - p)
        w = mv / counts[..., None] / nrows
        _accum(logits, g * (p - yv) * w)

    out._backward = bwd
    return out


def softmax_xent_rows(logits: Node, targets: np.ndarray) -> Node:
    """Mean cross entropy of row softmax against integer targets."""
    z = logits.value
    if z.ndim != 2:
        raise ShapeError("softmax_xent_rows expects 2-D logits")
    t = np.asarray(targets, dtype=np.int64)
    if t.shape != (z.shape[0],):
        raise ShapeError("targets must have one entry per logit row")
    if t.size == 0:
        raise ShapeError("softmax_xent_rows on empty input")
    m = z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z - m).sum(axis=1)) + m[:, 0]
    val = (lse - z[np.arange(t.size), t]).mean()
    out = Node(val, op="softmax_xent", parents=(logits,))

    def bwd(g):
        p = kernels.softmax_rows(z)
        p[np.arange(t.size), t] -= 1.0
        _accum(logits, g * p / t.size)

    out._backward = bwd
    return out


# --- graph traversal ---------------------------------------------------------


def _toposort(root: Node):
    order = []
    seen = set()
    stack = [(root, iter(root.parents))]
    seen.add(id(root))
    while stack:
        node, it = stack[-1]
        advanced = False
        for p in it:
            if id(p) not in seen:
                seen.add(id(p))
                stack.append((p, iter(p.parents)))
                advanced = True
                break
        if not advanced:
            order.append(node)
            stack.pop()
    return order


def backward(loss: Node) -> None:
    """Populate .grad on every reachable node that requires_grad."""
    if loss.value.size != 1:
        raise GraphError(f"backward needs a scalar loss, got shape {loss.value.shape}")
    order = _toposort(loss)
    loss.grad = np.ones_like(loss.value)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None and node.requires_grad:
            node._backward(node.grad)


def zero_grads(params) -> None:
    for p in params:
        p.grad = None


def grad_check(f, params, h: float = 1e-5, sample: int | None = None, rng=None) -> float:
    """Max relative error between backward() grads and central differences.

    f maps the list of parameter Nodes to a scalar Node. `sample` limits the
    number of coordinates probed per parameter (all when None).
    """
    zero_grads(params)
    loss = f(params)
    backward(loss)
    analytic = [np.zeros_like(p.value) if p.grad is None else p.grad.copy() for p in params]

    if rng is None:
        rng = np.random.default_rng(0)
    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.value.ravel()
        n = flat.size
        idx = np.arange(n) if sample is None or sample >= n else rng.choice(n, size=sample, replace=False)
        for i in idx:
            keep = flat[i]
            flat[i] = keep + h
            up = float(f(params).value)
            flat[i] = keep - h
            down = float(f(params).value)
            flat[i] = keep
            numeric = (up - down) / (2.0 * h)
            err = abs(ga.ravel()[i] - numeric) / max(1.0, abs(numeric))
            if err > worst:
                worst = err
    return worst
