"""Reverse-mode automatic differentiation over dense float64 arrays.

Every forward operation creates a :class:`Node` holding its value, the op tag,
its parents and a closure that maps the output gradient to parent gradients.
Graphs are rebuilt on every forward pass (define-by-run).
"""

from __future__ import annotations

import logging
from typing import Callable, Iterable, Iterator, Mapping, Optional, Sequence

import numpy as np

from aghmn.errors import ContractError, DimensionError

logger = logging.getLogger(__name__)

DTYPE = np.float64

# Floor applied inside ``log`` so that underflowed probabilities stay finite.
LOG_FLOOR = 1e-12

# Denominator floor for relative errors of near-zero gradients.
REL_ERR_FLOOR = 1e-4

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


def as_tensor(data) -> np.ndarray:
    """Convert array-like data to a float64 array."""
    return np.asarray(data, dtype=DTYPE)


class Node:
    """A value in the computation graph.

    Args:
        value: Forward result (converted to float64)
        op: Tag of the operation that produced the node ("leaf" for inputs)
        parents: Nodes this one was computed from, in operand order
        requires_grad: Whether backward should produce a gradient for this node
        name: Optional identifier (parameters carry their ParamSet name)
    """

    __slots__ = ("value", "op", "parents", "grad", "requires_grad", "name", "_backward")

    def __init__(
        self,
        value,
        op: str = "leaf",
        parents: Sequence["Node"] = (),
        requires_grad: bool = True,
        name: Optional[str] = None,
    ):
        self.value = as_tensor(value)
        self.op = op
        self.parents = tuple(parents)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._backward: Optional[BackwardFn] = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def item(self) -> float:
        if self.value.size != 1:
            raise ContractError(f"item() needs a single-element node, got shape {self.shape}")
        return float(self.value.reshape(-1)[0])

    def __repr__(self):
        label = f", name={self.name}" if self.name else ""
        return f"Node(op={self.op}, shape={self.shape}{label})"


def constant(value) -> Node:
    """A leaf that never receives a gradient."""
    return Node(value, op="const", requires_grad=False)


def zeros(*shape: int) -> Node:
    return constant(np.zeros(shape, dtype=DTYPE))


def _make(value: np.ndarray, op: str, parents: Sequence[Node], backward: BackwardFn) -> Node:
    out = Node(value, op=op, parents=parents, requires_grad=any(p.requires_grad for p in parents))
    if out.requires_grad:
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum out the axes numpy broadcasting added or stretched."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Node, b: Node) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(op, f"cannot broadcast {a.shape} with {b.shape}") from None


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------

def _matmul(a: Node, b: Node) -> Node:
    if a.value.ndim not in (1, 2) or b.value.ndim not in (1, 2) or (a.value.ndim == 1 and b.value.ndim == 1):
        raise DimensionError("matmul", f"unsupported operand ranks {a.shape} @ {b.shape}; use dot for vectors")
    if a.shape[-1] != b.shape[0]:
        raise DimensionError("matmul", f"inner extents differ: {a.shape} @ {b.shape}")
    av, bv = a.value, b.value

    def backward(g):
        if av.ndim == 2 and bv.ndim == 1:
            return np.outer(g, bv), av.T @ g
        if av.ndim == 1:
            return bv @ g, np.outer(av, g)
        return g @ bv.T, av.T @ g

    return _make(av @ bv, "matmul", (a, b), backward)


def _add(a: Node, b: Node) -> Node:
    _broadcast_shape("add", a, b)
    sa, sb = a.shape, b.shape
    return _make(a.value + b.value, "add", (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def _sub(a: Node, b: Node) -> Node:
    _broadcast_shape("sub", a, b)
    sa, sb = a.shape, b.shape
    return _make(a.value - b.value, "sub", (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def _mul(a: Node, b: Node) -> Node:
    _broadcast_shape("mul", a, b)
    av, bv = a.value, b.value
    return _make(
        av * bv, "mul", (a, b),
        lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
    )


def _scale(x: Node, *, c: float) -> Node:
    return _make(x.value * c, "scale", (x,), lambda g: (g * c,))


def _concat(*xs: Node) -> Node:
    if not xs:
        raise DimensionError("concat", "no operands")
    lead = xs[0].shape[:-1]
    for x in xs:
        if x.value.ndim == 0 or x.shape[:-1] != lead:
            raise DimensionError("concat", f"leading extents differ: {[x.shape for x in xs]}")
    splits = np.cumsum([x.shape[-1] for x in xs])[:-1]
    return _make(
        np.concatenate([x.value for x in xs], axis=-1), "concat", xs,
        lambda g: np.split(g, splits, axis=-1),
    )


def _stack(*xs: Node) -> Node:
    if not xs:
        raise DimensionError("stack", "no operands")
    shape = xs[0].shape
    if any(x.shape != shape for x in xs):
        raise DimensionError("stack", f"operand shapes differ: {[x.shape for x in xs]}")
    return _make(np.stack([x.value for x in xs]), "stack", xs, lambda g: list(g))


def _take(x: Node, *, index: int) -> Node:
    if x.value.ndim == 0 or not 0 <= index < x.shape[0]:
        raise DimensionError("take", f"index {index} outside leading extent of {x.shape}")
    shape = x.shape

    def backward(g):
        full = np.zeros(shape, dtype=DTYPE)
        full[index] = g
        return (full,)

    return _make(x.value[index].copy(), "take", (x,), backward)


def _tanh(x: Node) -> Node:
    y = np.tanh(x.value)
    return _make(y, "tanh", (x,), lambda g: (g * (1.0 - y * y),))


def _sigmoid(x: Node) -> Node:
    y = 0.5 * (1.0 + np.tanh(0.5 * x.value))
    return _make(y, "sigmoid", (x,), lambda g: (g * y * (1.0 - y),))


def _relu(x: Node) -> Node:
    mask = x.value > 0
    return _make(np.where(mask, x.value, 0.0), "relu", (x,), lambda g: (g * mask,))


def _softmax(x: Node) -> Node:
    if x.value.ndim == 0:
        raise DimensionError("softmax", "needs at least one axis")
    shifted = np.exp(x.value - x.value.max(axis=-1, keepdims=True))
    y = shifted / shifted.sum(axis=-1, keepdims=True)
    return _make(y, "softmax", (x,), lambda g: (y * (g - (g * y).sum(axis=-1, keepdims=True)),))


def _max_over_time(x: Node) -> Node:
    if x.value.ndim != 2 or x.shape[0] == 0:
        raise DimensionError("max_over_time", f"expects a nonempty (time, features) matrix, got {x.shape}")
    # argmax returns the first maximal row, which is where ties route their gradient
    rows = np.argmax(x.value, axis=0)
    cols = np.arange(x.shape[1])
    shape = x.shape

    def backward(g):
        full = np.zeros(shape, dtype=DTYPE)
        full[rows, cols] = g
        return (full,)

    return _make(x.value[rows, cols], "max_over_time", (x,), backward)


def _dot(a: Node, b: Node) -> Node:
    if a.value.ndim != 1 or a.shape != b.shape:
        raise DimensionError("dot", f"expects equal-length vectors, got {a.shape} and {b.shape}")
    av, bv = a.value, b.value
    return _make(np.dot(av, bv), "dot", (a, b), lambda g: (g * bv, g * av))


def _embedding(table: Node, *, indices: Sequence[int]) -> Node:
    idx = np.asarray(indices, dtype=np.int64)
    if table.value.ndim != 2:
        raise DimensionError("embedding", f"table must be a matrix, got {table.shape}")
    if idx.ndim != 1 or idx.size == 0:
        raise DimensionError("embedding", "indices must be a nonempty sequence")
    if idx.min() < 0 or idx.max() >= table.shape[0]:
        raise DimensionError("embedding", f"index out of range for {table.shape[0]} rows")
    shape = table.shape

    def backward(g):
        full = np.zeros(shape, dtype=DTYPE)
        np.add.at(full, idx, g)
        return (full,)

    return _make(table.value[idx], "embedding", (table,), backward)


def _conv1d(x: Node, w: Node, b: Node) -> Node:
    """Valid 1-D convolution over time: x (N, d), w (maps, width, d), b (maps,)."""
    if x.value.ndim != 2 or w.value.ndim != 3 or w.shape[2] != x.shape[1] or b.shape != (w.shape[0],):
        raise DimensionError("conv1d", f"input {x.shape}, filters {w.shape}, bias {b.shape} do not conform")
    n, d = x.shape
    maps, width, _ = w.shape
    if n < width:
        raise DimensionError("conv1d", f"sequence length {n} shorter than filter width {width}")
    positions = n - width + 1
    windows = np.lib.stride_tricks.sliding_window_view(x.value, (width, d)).reshape(positions, width * d)
    kernel = w.value.reshape(maps, width * d)
    out = windows @ kernel.T + b.value

    def backward(g):
        dw = (g.T @ windows).reshape(w.shape)
        dwin = (g @ kernel).reshape(positions, width, d)
        dx = np.zeros((n, d), dtype=DTYPE)
        for j in range(width):
            dx[j:j + positions] += dwin[:, j, :]
        return dx, dw, g.sum(axis=0)

    return _make(out, "conv1d", (x, w, b), backward)


def _dropout(x: Node, *, p: float, train: bool, rng: Optional[np.random.Generator] = None) -> Node:
    if not 0.0 <= p < 1.0:
        raise ContractError(f"dropout rate must lie in [0, 1), got {p}")
    if not train or p == 0.0:
        return x
    if rng is None:
        raise ContractError("dropout in training mode needs a random generator")
    # inverted scaling: evaluation needs no rescaling
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return _make(x.value * mask, "dropout", (x,), lambda g: (g * mask,))


def _weighted_sum(w: Node, m: Node) -> Node:
    """sum_k w[k] * m[k] with per-column terms accumulated in sorted order.

    The sorted accumulation makes the result independent of the order of the
    (weight, memory) pairs, bit for bit.
    """
    if w.value.ndim != 1 or m.value.ndim != 2 or w.shape[0] != m.shape[0]:
        raise DimensionError("weighted_sum", f"weights {w.shape} and memories {m.shape} do not conform")
    wv, mv = w.value, m.value
    terms = np.sort(wv[:, None] * mv, axis=0)
    return _make(terms.sum(axis=0), "weighted_sum", (w, m), lambda g: (mv @ g, np.outer(wv, g)))


def _sum(x: Node) -> Node:
    shape = x.shape
    return _make(np.sum(x.value), "sum", (x,), lambda g: (np.full(shape, g, dtype=DTYPE),))


def _mean(x: Node) -> Node:
    shape, size = x.shape, x.value.size
    if size == 0:
        raise DimensionError("mean", "empty operand")
    return _make(np.mean(x.value), "mean", (x,), lambda g: (np.full(shape, g / size, dtype=DTYPE),))


def _log(x: Node, *, floor: float = LOG_FLOOR) -> Node:
    clipped = np.maximum(x.value, floor)
    live = x.value > floor
    return _make(np.log(clipped), "log", (x,), lambda g: (np.where(live, g / clipped, 0.0),))


OPS: dict[str, Callable[..., Node]] = {
    "matmul": _matmul,
    "add": _add,
    "sub": _sub,
    "mul": _mul,
    "scale": _scale,
    "concat": _concat,
    "stack": _stack,
    "take": _take,
    "tanh": _tanh,
    "sigmoid": _sigmoid,
    "relu": _relu,
    "softmax": _softmax,
    "max_over_time": _max_over_time,
    "dot": _dot,
    "embedding": _embedding,
    "conv1d": _conv1d,
    "dropout": _dropout,
    "weighted_sum": _weighted_sum,
    "sum": _sum,
    "mean": _mean,
    "log": _log,
}


def apply(kind: str, inputs: Sequence[Node], **attrs) -> Node:
    """Apply primitive ``kind`` to ``inputs`` and record the graph edge.

    Args:
        kind: One of the keys of :data:`OPS`
        inputs: Operand nodes
        **attrs: Non-differentiable op attributes (scale factor, indices, dropout rate, ...)

    Raises:
        DimensionError: If operand extents do not conform to ``kind``
        ContractError: If ``kind`` is unknown
    """
    try:
        fn = OPS[kind]
    except KeyError:
        raise ContractError(f"unknown op '{kind}'") from None
    return fn(*inputs, **attrs)


# Thin wrappers so model code reads like arithmetic

def matmul(a: Node, b: Node) -> Node:
    return apply("matmul", (a, b))


def add(a: Node, b: Node) -> Node:
    return apply("add", (a, b))


def sub(a: Node, b: Node) -> Node:
    return apply("sub", (a, b))


def mul(a: Node, b: Node) -> Node:
    return apply("mul", (a, b))


def scale(x: Node, c: float) -> Node:
    return apply("scale", (x,), c=c)


def concat(*xs: Node) -> Node:
    return apply("concat", xs)


def stack(xs: Sequence[Node]) -> Node:
    return apply("stack", tuple(xs))


def take(x: Node, index: int) -> Node:
    return apply("take", (x,), index=index)


def tanh(x: Node) -> Node:
    return apply("tanh", (x,))


def sigmoid(x: Node) -> Node:
    return apply("sigmoid", (x,))


def relu(x: Node) -> Node:
    return apply("relu", (x,))


def softmax(x: Node) -> Node:
    return apply("softmax", (x,))


def max_over_time(x: Node) -> Node:
    return apply("max_over_time", (x,))


def dot(a: Node, b: Node) -> Node:
    return apply("dot", (a, b))


def embedding(table: Node, indices: Sequence[int]) -> Node:
    return apply("embedding", (table,), indices=indices)


def conv1d(x: Node, w: Node, b: Node) -> Node:
    return apply("conv1d", (x, w, b))


def dropout(x: Node, p: float, train: bool, rng: Optional[np.random.Generator] = None) -> Node:
    return apply("dropout", (x,), p=p, train=train, rng=rng)


def weighted_sum(w: Node, m: Node) -> Node:
    return apply("weighted_sum", (w, m))


def total(x: Node) -> Node:
    return apply("sum", (x,))


def mean(x: Node) -> Node:
    return apply("mean", (x,))


def log(x: Node, floor: float = LOG_FLOOR) -> Node:
    return apply("log", (x,), floor=floor)


# ---------------------------------------------------------------------------
# Backward pass
# ---------------------------------------------------------------------------

def _topological_order(root: Node) -> list[Node]:
    order: list[Node] = []
    visited: set[int] = set()
    stack_: list[tuple[Node, bool]] = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack_.append((node, True))
        for parent in node.parents:
            if parent.requires_grad and id(parent) not in visited:
                stack_.append((parent, False))
    return order


def backward(loss: Node) -> dict[Node, np.ndarray]:
    """Populate ``grad`` on every node reachable from ``loss``.

    Gradients accumulate (sum) across fan-out, so shared subexpressions get
    the same result as their duplicated-subtree expansion.

    Returns:
        Mapping from node to its gradient

    Raises:
        ContractError: If ``loss`` is not scalar-shaped
    """
    if loss.value.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    order = _topological_order(loss)
    for node in order:
        node.grad = None
    loss.grad = np.ones(loss.shape, dtype=DTYPE)
    for node in reversed(order):
        if node.grad is None or node._backward is None:
            continue
        for parent, g in zip(node.parents, node._backward(node.grad)):
            if g is None or not parent.requires_grad:
                continue
            g = np.asarray(g, dtype=DTYPE).reshape(parent.shape)
            parent.grad = g.copy() if parent.grad is None else parent.grad + g
    return {node: node.grad for node in order if node.grad is not None}


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

class ParamSet:
    """Named trainable parameters.

    Args:
        seed: Seed the initial values were drawn with (recorded for reproducibility)
    """

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._nodes: dict[str, Node] = {}

    def add(self, name: str, value) -> Node:
        if name in self._nodes:
            raise ContractError(f"duplicate parameter name '{name}'")
        node = Node(np.array(value, dtype=DTYPE), op="param", name=name)
        self._nodes[name] = node
        return node

    def __getitem__(self, name: str) -> Node:
        return self._nodes[name]

    def __contains__(self, name: str) -> bool:
        return name in self._nodes

    def __iter__(self) -> Iterator[str]:
        return iter(self._nodes)

    def __len__(self) -> int:
        return len(self._nodes)

    def items(self) -> Iterable[tuple[str, Node]]:
        return self._nodes.items()

    def size(self) -> int:
        """Total number of scalar parameters."""
        return sum(node.value.size for node in self._nodes.values())

    def zero_grad(self) -> None:
        for node in self._nodes.values():
            node.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        """Current gradients by name (zeros for parameters the loss did not reach)."""
        return {
            name: node.grad if node.grad is not None else np.zeros_like(node.value)
            for name, node in self._nodes.items()
        }

    def state(self) -> dict[str, np.ndarray]:
        """Deep copy of all parameter values."""
        return {name: node.value.copy() for name, node in self._nodes.items()}

    def load_state(self, state: Mapping[str, np.ndarray]) -> None:
        if set(state) != set(self._nodes):
            missing = sorted(set(self._nodes) - set(state))
            extra = sorted(set(state) - set(self._nodes))
            raise ContractError(f"parameter names differ (missing={missing}, unexpected={extra})")
        for name, value in state.items():
            node = self._nodes[name]
            value = as_tensor(value)
            if value.shape != node.shape:
                raise DimensionError("load_state", f"'{name}' has shape {value.shape}, expected {node.shape}")
            node.value = value.copy()


# ---------------------------------------------------------------------------
# Finite-difference oracle
# ---------------------------------------------------------------------------

def _scalar(out) -> float:
    return out.item() if isinstance(out, Node) else float(out)


def finite_diff_grad(
    f: Callable[[ParamSet], object],
    params: ParamSet,
    eps: float = 1e-5,
    names: Optional[Iterable[str]] = None,
) -> dict[str, np.ndarray]:
    """Central-difference gradient of a scalar function of ``params``.

    Each scalar parameter is perturbed in place by +/- ``eps`` and restored.

    Args:
        f: Deterministic scalar function (returns a float or a scalar Node)
        params: Parameters to differentiate against
        eps: Step size
        names: Restrict the oracle to these parameters

    Returns:
        Mapping from parameter name to numeric gradient
    """
    if eps <= 0:
        raise ContractError(f"eps must be positive, got {eps}")
    result: dict[str, np.ndarray] = {}
    for name in names if names is not None else list(params):
        node = params[name]
        flat = node.value.reshape(-1)
        grad = np.zeros(flat.shape, dtype=DTYPE)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + eps
            plus = _scalar(f(params))
            flat[i] = original - eps
            minus = _scalar(f(params))
            flat[i] = original
            grad[i] = (plus - minus) / (2.0 * eps)
        result[name] = grad.reshape(node.shape)
    return result


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = REL_ERR_FLOOR) -> np.ndarray:
    """Elementwise |a - n| / max(|a|, |n|, floor)."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom
