"""Reverse-mode automatic differentiation over float64 numpy arrays.

The graph is built eagerly: every op returns a DiffNode holding its value,
its parent nodes, and a closure that maps the output gradient to parent
gradients.  backward() walks the graph once in reverse topological order
and overwrites .grad on every node it visits, so calling it twice on the
same graph gives identical results.

The op set is deliberately small and strict: 2-D matrices almost
everywhere, no implicit broadcasting except the layer_norm affine pair,
no in-place mutation of node values.  All math is float64 and every
produced value is finite-checked at construction.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy.special import erf

from fedprompt.errors import DimensionError, NumericError, SchemaError

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)

LAYER_NORM_EPS = 1e-5
L2_NORM_EPS = 1e-8


class Tensor:
    """Finite float64 array, row-major, read-only after construction."""

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.array(data, dtype=np.float64, order="C", copy=True)
        if not np.all(np.isfinite(arr)):
            raise NumericError("tensor values must be finite")
        arr.setflags(write=False)
        self.data = arr

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        """Writable copy of the underlying array."""
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self._item_err()

    def _item_err(self):
        raise DimensionError(f"item() needs a single-element tensor, got shape {self.shape}")

    def __repr__(self):
        return f"Tensor(shape={self.shape})"


class DiffNode:
    """One node of the compute graph.

    value is the forward result, parents the input nodes, and the backward
    rule maps d(loss)/d(value) to one gradient array per parent.  Leaves
    have no parents and no rule.
    """

    __slots__ = ("value", "parents", "grad", "op", "_rule")

    def __init__(
        self,
        value,
        parents: tuple[DiffNode, ...] = (),
        rule: Callable[[np.ndarray], tuple[np.ndarray, ...]] | None = None,
        op: str = "leaf",
    ):
        self.value = value if isinstance(value, Tensor) else Tensor(value)
        self.parents = parents
        self.grad: Tensor | None = None
        self.op = op
        self._rule = rule

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self):
        return f"DiffNode(op={self.op!r}, shape={self.shape})"


class Parameter(DiffNode):
    """Named trainable leaf."""

    __slots__ = ("name",)

    def __init__(self, name: str, value):
        super().__init__(value, op="param")
        self.name = name

    def set_value(self, value) -> None:
        """Replace the stored value; the existing grad is kept as-is."""
        self.value = value if isinstance(value, Tensor) else Tensor(value)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


class ParameterSet:
    """Collection of uniquely named parameters with a fixed flattening order.

    Iteration, flatten() and unflatten() all use lexicographic name order,
    so two sets with equal schemas serialize coordinates identically.
    """

    def __init__(self, params: Sequence[Parameter]):
        by_name: dict[str, Parameter] = {}
        for p in params:
            if p.name in by_name:
                raise SchemaError(f"duplicate parameter name {p.name!r}")
            by_name[p.name] = p
        self._params = {name: by_name[name] for name in sorted(by_name)}

    def __len__(self) -> int:
        return len(self._params)

    def __iter__(self):
        return iter(self._params.values())

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __getitem__(self, name: str) -> Parameter:
        try:
            return self._params[name]
        except KeyError:
            raise SchemaError(f"no parameter named {name!r}") from None

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def schema(self) -> tuple[tuple[str, tuple[int, ...]], ...]:
        return tuple((name, p.shape) for name, p in self._params.items())

    def n_scalars(self) -> int:
        return sum(p.value.size for p in self)

    def flatten(self) -> Tensor:
        """All coordinates as one vector, lexicographic name order."""
        if not self._params:
            return Tensor(np.empty(0))
        return Tensor(np.concatenate([p.value.data.reshape(-1) for p in self]))

    def unflatten(self, flat: Tensor) -> "ParameterSet":
        """Rebuild a set with this schema from a flat vector."""
        vec = flat.data if isinstance(flat, Tensor) else np.asarray(flat, dtype=np.float64)
        if vec.ndim != 1:
            raise DimensionError(f"flat vector must be 1-D, got shape {vec.shape}")
        if vec.size != self.n_scalars():
            raise SchemaError(
                f"flat vector has {vec.size} scalars, schema needs {self.n_scalars()}"
            )
        out, offset = [], 0
        for name, p in self.items():
            n = p.value.size
            out.append(Parameter(name, vec[offset : offset + n].reshape(p.shape)))
            offset += n
        return ParameterSet(out)

    def copy(self) -> "ParameterSet":
        return ParameterSet([Parameter(name, p.value.data) for name, p in self.items()])

    def check_same_schema(self, other: "ParameterSet", label: str = "parameter set") -> None:
        if self.schema() != other.schema():
            raise SchemaError(f"{label} schema mismatch: {self.schema()} vs {other.schema()}")


def constant(value) -> DiffNode:
    """Leaf node for data that needs no gradient of its own."""
    return DiffNode(value, op="const")


def _as_node(x) -> DiffNode:
    return x if isinstance(x, DiffNode) else constant(x)


def _need_same_shape(a: DiffNode, b: DiffNode, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op} needs equal shapes, got {a.shape} and {b.shape}")


def _need_2d(x: DiffNode, op: str) -> None:
    if x.value.ndim != 2:
        raise DimensionError(f"{op} needs a 2-D operand, got shape {x.shape}")


def add(a: DiffNode, b: DiffNode) -> DiffNode:
    a, b = _as_node(a), _as_node(b)
    _need_same_shape(a, b, "add")
    return DiffNode(a.value.data + b.value.data, (a, b), lambda g: (g, g), op="add")


def sub(a: DiffNode, b: DiffNode) -> DiffNode:
    a, b = _as_node(a), _as_node(b)
    _need_same_shape(a, b, "sub")
    return DiffNode(a.value.data - b.value.data, (a, b), lambda g: (g, -g), op="sub")


def scale(a: DiffNode, s: float) -> DiffNode:
    a = _as_node(a)
    s = float(s)
    return DiffNode(a.value.data * s, (a,), lambda g: (g * s,), op="scale")


def matmul(a: DiffNode, b: DiffNode) -> DiffNode:
    a, b = _as_node(a), _as_node(b)
    _need_2d(a, "matmul")
    _need_2d(b, "matmul")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    av, bv = a.value.data, b.value.data
    return DiffNode(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g), op="matmul")


def transpose(a: DiffNode) -> DiffNode:
    a = _as_node(a)
    _need_2d(a, "transpose")
    return DiffNode(a.value.data.T, (a,), lambda g: (g.T,), op="transpose")


def slice_cols(a: DiffNode, start: int, stop: int) -> DiffNode:
    a = _as_node(a)
    _need_2d(a, "slice_cols")
    n_cols = a.shape[1]
    if not (0 <= start < stop <= n_cols):
        raise DimensionError(f"slice_cols [{start}:{stop}] out of range for {a.shape}")

    def rule(g):
        full = np.zeros(a.shape)
        full[:, start:stop] = g
        return (full,)

    return DiffNode(a.value.data[:, start:stop], (a,), rule, op="slice_cols")


def concat_cols(parts: Sequence[DiffNode]) -> DiffNode:
    parts = [_as_node(p) for p in parts]
    if not parts:
        raise DimensionError("concat_cols needs at least one part")
    for p in parts:
        _need_2d(p, "concat_cols")
    rows = parts[0].shape[0]
    if any(p.shape[0] != rows for p in parts):
        raise DimensionError("concat_cols parts must share the row count")
    widths = [p.shape[1] for p in parts]
    splits = np.cumsum(widths)[:-1]
    value = np.concatenate([p.value.data for p in parts], axis=1)
    return DiffNode(
        value, tuple(parts), lambda g: tuple(np.split(g, splits, axis=1)), op="concat_cols"
    )


def concat_rows(parts: Sequence[DiffNode]) -> DiffNode:
    parts = [_as_node(p) for p in parts]
    if not parts:
        raise DimensionError("concat_rows needs at least one part")
    for p in parts:
        _need_2d(p, "concat_rows")
    cols = parts[0].shape[1]
    if any(p.shape[1] != cols for p in parts):
        raise DimensionError("concat_rows parts must share the column count")
    splits = np.cumsum([p.shape[0] for p in parts])[:-1]
    value = np.concatenate([p.value.data for p in parts], axis=0)
    return DiffNode(
        value, tuple(parts), lambda g: tuple(np.split(g, splits, axis=0)), op="concat_rows"
    )


def mean_rows(a: DiffNode) -> DiffNode:
    """Average over rows; [n, d] becomes [1, d]."""
    a = _as_node(a)
    _need_2d(a, "mean_rows")
    n = a.shape[0]
    value = a.value.data.mean(axis=0, keepdims=True)
    return DiffNode(value, (a,), lambda g: (np.repeat(g / n, n, axis=0),), op="mean_rows")


def layer_norm(x: DiffNode, gain: DiffNode, bias: DiffNode) -> DiffNode:
    """Row-wise layer normalization with a learned affine pair.

    Population variance, epsilon 1e-5 inside the square root.  gain and
    bias are vectors broadcast over rows; this is the only broadcasting
    in the op set.
    """
    x, gain, bias = _as_node(x), _as_node(gain), _as_node(bias)
    _need_2d(x, "layer_norm")
    d = x.shape[1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(
            f"layer_norm affine must have shape ({d},), got {gain.shape} and {bias.shape}"
        )
    xv = x.value.data
    mu = xv.mean(axis=1, keepdims=True)
    xc = xv - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LAYER_NORM_EPS)
    y = xc * inv
    value = y * gain.value.data + bias.value.data

    def rule(g):
        gy = g * gain.value.data
        s1 = gy.sum(axis=1, keepdims=True)
        s2 = (gy * y).sum(axis=1, keepdims=True)
        dx = (inv / d) * (d * gy - s1 - y * s2)
        return dx, (g * y).sum(axis=0), g.sum(axis=0)

    return DiffNode(value, (x, gain, bias), rule, op="layer_norm")


def softmax(x: DiffNode) -> DiffNode:
    """Row-wise softmax with max subtraction for stability."""
    x = _as_node(x)
    _need_2d(x, "softmax")
    xv = x.value.data
    z = xv - xv.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)

    def rule(g):
        inner = (g * y).sum(axis=1, keepdims=True)
        return (y * (g - inner),)

    return DiffNode(y, (x,), rule, op="softmax")


def _gelu_forward(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x * _INV_SQRT2))


def _gelu_derivative(x: np.ndarray) -> np.ndarray:
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return cdf + x * pdf


def gelu(x: DiffNode) -> DiffNode:
    """Exact Gaussian error linear unit, erf form."""
    x = _as_node(x)
    xv = x.value.data
    return DiffNode(_gelu_forward(xv), (x,), lambda g: (g * _gelu_derivative(xv),), op="gelu")


def geglu(x: DiffNode) -> DiffNode:
    """Gated GELU over the last axis: first half of the columns carries the
    value, second half the gate, output width is half the input width."""
    x = _as_node(x)
    _need_2d(x, "geglu")
    w = x.shape[1]
    if w % 2 != 0:
        raise DimensionError(f"geglu needs an even column count, got {w}")
    h = w // 2
    xv = x.value.data
    a, b = xv[:, :h], xv[:, h:]
    gate = _gelu_forward(b)

    def rule(g):
        da = g * gate
        db = g * a * _gelu_derivative(b)
        return (np.concatenate([da, db], axis=1),)

    return DiffNode(a * gate, (x,), rule, op="geglu")


def l2_normalize(x: DiffNode) -> DiffNode:
    """Scale each row to unit Euclidean norm; rows with norm below 1e-8
    are divided by the epsilon instead."""
    x = _as_node(x)
    _need_2d(x, "l2_normalize")
    xv = x.value.data
    norms = np.sqrt((xv * xv).sum(axis=1, keepdims=True))
    denom = np.maximum(norms, L2_NORM_EPS)
    y = xv / denom

    def rule(g):
        full = (g - y * (y * g).sum(axis=1, keepdims=True)) / denom
        clipped = g / L2_NORM_EPS
        return (np.where(norms >= L2_NORM_EPS, full, clipped),)

    return DiffNode(y, (x,), rule, op="l2_normalize")


def cross_entropy(logits: DiffNode, labels) -> DiffNode:
    """Mean negative log-likelihood of the given class labels.

    logits is [batch, classes]; labels is a sequence of ints in range.
    Returns a scalar node.
    """
    logits = _as_node(logits)
    _need_2d(logits, "cross_entropy")
    n, k = logits.shape
    lab = np.asarray(labels, dtype=np.int64).reshape(-1)
    if lab.shape[0] != n:
        raise DimensionError(f"cross_entropy got {lab.shape[0]} labels for {n} rows")
    if lab.size and (lab.min() < 0 or lab.max() >= k):
        raise IndexError(f"label out of range for {k} classes")
    xv = logits.value.data
    z = xv - xv.max(axis=1, keepdims=True)
    e = np.exp(z)
    sums = e.sum(axis=1, keepdims=True)
    logp = z - np.log(sums)
    value = -logp[np.arange(n), lab].mean()

    def rule(g):
        p = e / sums
        p[np.arange(n), lab] -= 1.0
        return (float(g) * p / n,)

    return DiffNode(value, (logits,), rule, op="cross_entropy")


def _toposort(root: DiffNode) -> list[DiffNode]:
    # iterative post-order so deep graphs cannot hit the recursion limit
    order: list[DiffNode] = []
    seen: set[int] = set()
    stack: list[tuple[DiffNode, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(root: DiffNode) -> None:
    """Populate .grad on every node reachable from the scalar root.

    Gradients accumulate across fan-out within one call, but each call
    overwrites whatever a previous backward left behind.
    """
    if root.value.size != 1:
        raise DimensionError(f"backward needs a scalar root, got shape {root.shape}")
    order = _toposort(root)
    acc: dict[int, np.ndarray] = {id(root): np.ones(root.value.shape)}
    for node in reversed(order):
        g = acc.get(id(node))
        if g is None:
            # defensive; every non-root node in the order has a consumer
            g = np.zeros(node.value.shape)
        node.grad = Tensor(g)
        if node._rule is None:
            continue
        parent_grads = node._rule(g)
        if len(parent_grads) != len(node.parents):
            raise SchemaError(f"{node.op} rule returned {len(parent_grads)} gradients")
        for parent, pg in zip(node.parents, parent_grads):
            if pg.shape != parent.value.shape:
                raise DimensionError(
                    f"{node.op} gradient shape {pg.shape} does not match parent {parent.value.shape}"
                )
            prev = acc.get(id(parent))
            acc[id(parent)] = pg.copy() if prev is None else prev + pg


def grad_check(
    loss_fn: Callable[[], DiffNode],
    params: ParameterSet,
    h: float = 1e-5,
) -> float:
    """Compare analytic gradients against central differences.

    loss_fn rebuilds the graph from the current parameter values and
    returns the scalar loss node.  Returns the worst relative error over
    every coordinate of every parameter, where the relative error uses
    max(|analytic|, |numeric|, 1e-8) as the denominator.
    """
    for p in params:
        p.grad = None
    root = loss_fn()
    backward(root)
    analytic = {name: p.grad.numpy() if p.grad is not None else np.zeros(p.shape)
                for name, p in params.items()}
    worst = 0.0
    for name, p in params.items():
        base = p.value.numpy()
        flat = base.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            p.set_value(base)
            lo_hi = loss_fn().value.item()
            flat[i] = keep - h
            p.set_value(base)
            lo_lo = loss_fn().value.item()
            flat[i] = keep
            p.set_value(base)
            numeric = (lo_hi - lo_lo) / (2.0 * h)
            a = float(analytic[name].reshape(-1)[i])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
