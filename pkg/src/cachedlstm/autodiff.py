"""Dense 2-D float64 tensors with a dynamic reverse-mode differentiation tape.

Values are plain numpy arrays of shape (rows, cols); batching is always the
row dimension.  A ``Tape`` records every operation as it runs (define-by-run),
so variable-length recurrences unroll naturally.  ``backward`` replays the
tape once in reverse and returns a gradient for every leaf.

The operation set is the minimum needed for gated recurrent cells and a
softmax classifier: matrix products, elementwise arithmetic, sigmoid/tanh,
column concatenation/slicing, row softmax, plus a few indexing helpers
(row gather, per-row column picks) used for embeddings and cross-entropy.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

__all__ = [
    "ShapeError",
    "Tape",
    "Var",
    "matmul",
    "add",
    "mul",
    "sub_from_one",
    "sigmoid",
    "tanh_",
    "concat_cols",
    "slice_cols",
    "softmax_rows",
    "transpose",
    "mul_const",
    "add_const",
    "add_rowvec",
    "mul_colvec",
    "take_rows",
    "pick_cols",
    "sum_all",
    "sum_rows",
    "log_floor",
    "backward",
    "grad_check",
]

# Sigmoid/tanh saturate to exactly 0.0/1.0 (or +-1.0) in float64 for large
# pre-activations; clamping keeps outputs strictly inside the open codomain.
_SIG_LO = 1e-300
_SIG_HI = 1.0 - 2.0 ** -53
_TANH_HI = 1.0 - 2.0 ** -53


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for an operation."""


class _Node:
    __slots__ = ("value", "parents", "vjp")

    def __init__(self, value, parents, vjp):
        self.value = value
        self.parents = parents
        self.vjp = vjp


class Var:
    """A value recorded on a tape: pairs a tensor with its tape node id."""

    __slots__ = ("tape", "nid", "value")

    def __init__(self, tape: "Tape", nid: int, value: np.ndarray):
        self.tape = tape
        self.nid = nid
        self.value = value

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    @property
    def rows(self) -> int:
        return self.value.shape[0]

    @property
    def cols(self) -> int:
        return self.value.shape[1]

    def __repr__(self) -> str:
        return f"Var(nid={self.nid}, shape={self.value.shape})"


class Tape:
    """Ordered record of operations; node ids are topologically sorted."""

    def __init__(self):
        self._nodes: list[_Node] = []
        self._leaf_ids: list[int] = []
        self._transpose_memo: dict[int, Var] = {}

    def __len__(self) -> int:
        return len(self._nodes)

    def leaf(self, value: np.ndarray | Sequence) -> Var:
        """Record an input tensor (parameter or constant) as a tape leaf."""
        arr = np.asarray(value, dtype=np.float64)
        if arr.ndim != 2:
            raise ShapeError(f"leaf value must be 2-D, got shape {arr.shape}")
        nid = len(self._nodes)
        self._nodes.append(_Node(arr, (), None))
        self._leaf_ids.append(nid)
        return Var(self, nid, arr)

    def node_parents(self, nid: int) -> tuple[int, ...]:
        return self._nodes[nid].parents

    @property
    def leaf_ids(self) -> list[int]:
        return list(self._leaf_ids)

    def _record(self, value: np.ndarray, parents: tuple[int, ...], vjp: Callable) -> Var:
        nid = len(self._nodes)
        self._nodes.append(_Node(value, parents, vjp))
        return Var(self, nid, value)


def _same_tape(*vs: Var) -> Tape:
    tape = vs[0].tape
    for v in vs[1:]:
        if v.tape is not tape:
            raise ValueError("operands were recorded on different tapes")
    return tape


def matmul(a: Var, b: Var) -> Var:
    """Matrix product a @ b with gradients g @ b^T and a^T @ g."""
    tape = _same_tape(a, b)
    if a.cols != b.rows:
        raise ShapeError(f"matmul: inner dimensions differ: {a.shape} vs {b.shape}")
    av, bv = a.value, b.value
    out = av @ bv

    def vjp(g):
        return g @ bv.T, av.T @ g

    return tape._record(out, (a.nid, b.nid), vjp)


def _require_same_shape(op: str, a: Var, b: Var) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes differ: {a.shape} vs {b.shape}")


def add(a: Var, b: Var) -> Var:
    """Elementwise sum; both inputs receive the upstream gradient unchanged."""
    tape = _same_tape(a, b)
    _require_same_shape("add", a, b)
    return tape._record(a.value + b.value, (a.nid, b.nid), lambda g: (g, g))


def mul(a: Var, b: Var) -> Var:
    """Elementwise (Hadamard) product."""
    tape = _same_tape(a, b)
    _require_same_shape("mul", a, b)
    av, bv = a.value, b.value
    return tape._record(av * bv, (a.nid, b.nid), lambda g: (g * bv, g * av))


def sub_from_one(a: Var) -> Var:
    """1 - a elementwise, as used by coupled-gate and update-rate blends."""
    return a.tape._record(1.0 - a.value, (a.nid,), lambda g: (-g,))


def sigmoid(a: Var) -> Var:
    """Logistic sigmoid, clamped strictly inside (0, 1).

    Computed in the overflow-free branch form; saturated outputs are nudged
    off exact 0.0/1.0 so downstream open-interval invariants hold.
    """
    x = a.value
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    np.clip(out, _SIG_LO, _SIG_HI, out=out)

    def vjp(g):
        return (g * out * (1.0 - out),)

    return a.tape._record(out, (a.nid,), vjp)


def tanh_(a: Var) -> Var:
    """Hyperbolic tangent, clamped strictly inside (-1, 1)."""
    out = np.tanh(a.value)
    np.clip(out, -_TANH_HI, _TANH_HI, out=out)

    def vjp(g):
        return (g * (1.0 - out * out),)

    return a.tape._record(out, (a.nid,), vjp)


def concat_cols(parts: Sequence[Var]) -> Var:
    """Column-wise concatenation of equal-row tensors."""
    if not parts:
        raise ValueError("concat_cols: need at least one part")
    tape = _same_tape(*parts)
    rows = parts[0].rows
    for p in parts[1:]:
        if p.rows != rows:
            raise ShapeError(
                f"concat_cols: row counts differ: {parts[0].shape} vs {p.shape}"
            )
    widths = [p.cols for p in parts]
    out = np.concatenate([p.value for p in parts], axis=1)
    bounds = np.cumsum([0] + widths)

    def vjp(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(widths)))

    return tape._record(out, tuple(p.nid for p in parts), vjp)


def slice_cols(a: Var, start: int, stop: int) -> Var:
    """Contiguous column slice a[:, start:stop]."""
    if not (0 <= start < stop <= a.cols):
        raise IndexError(
            f"slice_cols: bounds [{start}, {stop}) invalid for {a.cols} columns"
        )
    shape = a.shape

    def vjp(g):
        full = np.zeros(shape)
        full[:, start:stop] = g
        return (full,)

    return a.tape._record(np.ascontiguousarray(a.value[:, start:stop]), (a.nid,), vjp)


def softmax_rows(a: Var) -> Var:
    """Row-wise softmax with per-row max subtraction for stability."""
    x = a.value
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)

    def vjp(g):
        dot = (g * out).sum(axis=1, keepdims=True)
        return (out * (g - dot),)

    return a.tape._record(out, (a.nid,), vjp)


def transpose(a: Var) -> Var:
    """Matrix transpose.  Repeated transposes of one Var share a tape node."""
    memo = a.tape._transpose_memo
    cached = memo.get(a.nid)
    if cached is not None:
        return cached
    out = a.tape._record(a.value.T, (a.nid,), lambda g: (g.T,))
    memo[a.nid] = out
    return out


def mul_const(a: Var, c: float) -> Var:
    """Scale by a python scalar (not a tape value)."""
    return a.tape._record(a.value * c, (a.nid,), lambda g: (g * c,))


def add_const(a: Var, c) -> Var:
    """Add a constant scalar or broadcastable array (not a tape value)."""
    return a.tape._record(a.value + c, (a.nid,), lambda g: (g,))


def add_rowvec(a: Var, row: Var) -> Var:
    """Add a 1 x n row vector to every row of an m x n tensor."""
    tape = _same_tape(a, row)
    if row.rows != 1 or row.cols != a.cols:
        raise ShapeError(f"add_rowvec: expected 1x{a.cols} row, got {row.shape}")

    def vjp(g):
        return g, g.sum(axis=0, keepdims=True)

    return tape._record(a.value + row.value, (a.nid, row.nid), vjp)


def mul_colvec(a: Var, col: Var) -> Var:
    """Scale each row of an m x n tensor by the matching m x 1 entry."""
    tape = _same_tape(a, col)
    if col.cols != 1 or col.rows != a.rows:
        raise ShapeError(f"mul_colvec: expected {a.rows}x1 column, got {col.shape}")
    av, cv = a.value, col.value

    def vjp(g):
        return g * cv, (g * av).sum(axis=1, keepdims=True)

    return tape._record(av * cv, (a.nid, col.nid), vjp)


def take_rows(a: Var, ids) -> Var:
    """Gather rows a[ids, :]; the gradient scatter-adds into the source rows."""
    idx = np.asarray(ids, dtype=np.intp)
    if idx.ndim != 1:
        raise ShapeError(f"take_rows: ids must be 1-D, got shape {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= a.rows):
        raise IndexError(f"take_rows: id out of range for {a.rows} rows")
    shape = a.shape

    def vjp(g):
        full = np.zeros(shape)
        np.add.at(full, idx, g)
        return (full,)

    return a.tape._record(a.value[idx, :], (a.nid,), vjp)


def pick_cols(a: Var, cols) -> Var:
    """Per-row entry pick: returns a[i, cols[i]] as an m x 1 column."""
    idx = np.asarray(cols, dtype=np.intp)
    if idx.shape != (a.rows,):
        raise ShapeError(f"pick_cols: need one column index per row, got {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= a.cols):
        raise IndexError(f"pick_cols: column index out of range for {a.cols} columns")
    m = a.rows
    shape = a.shape
    out = a.value[np.arange(m), idx].reshape(m, 1)

    def vjp(g):
        full = np.zeros(shape)
        full[np.arange(m), idx] = g[:, 0]
        return (full,)

    return a.tape._record(out, (a.nid,), vjp)


def sum_all(a: Var) -> Var:
    """Sum of all entries as a 1 x 1 tensor."""
    shape = a.shape

    def vjp(g):
        return (np.full(shape, g[0, 0]),)

    return a.tape._record(a.value.sum().reshape(1, 1), (a.nid,), vjp)


def sum_rows(a: Var) -> Var:
    """Column sums: m x n -> 1 x n."""
    m = a.rows

    def vjp(g):
        return (np.repeat(g, m, axis=0),)

    return a.tape._record(a.value.sum(axis=0, keepdims=True), (a.nid,), vjp)


def log_floor(a: Var, floor: float = 0.0) -> Var:
    """Natural log of max(a, floor); zero gradient where the floor is active."""
    clipped = np.maximum(a.value, floor)
    out = np.log(clipped)

    def vjp(g):
        grad = g / clipped
        if floor > 0.0:
            grad = np.where(a.value > floor, grad, 0.0)
        return (grad,)

    return a.tape._record(out, (a.nid,), vjp)


def backward(tape: Tape, loss: Var) -> dict[int, np.ndarray]:
    """Reverse sweep from a scalar loss.

    Returns dLoss/dLeaf keyed by leaf node id, for every leaf on the tape;
    leaves the loss does not depend on get zero gradients.  Each recorded
    node is visited exactly once, in reverse topological order.
    """
    if loss.tape is not tape:
        raise ValueError("loss was recorded on a different tape")
    if loss.shape != (1, 1):
        raise ShapeError(f"backward: loss must be 1x1, got shape {loss.shape}")

    nodes = tape._nodes
    grads: list[np.ndarray | None] = [None] * (loss.nid + 1)
    grads[loss.nid] = np.ones((1, 1))

    for nid in range(loss.nid, -1, -1):
        g = grads[nid]
        if g is None:
            continue
        node = nodes[nid]
        if node.vjp is None:
            continue
        for pid, pg in zip(node.parents, node.vjp(g)):
            if grads[pid] is None:
                grads[pid] = pg
            else:
                # Rebind rather than += : vjp outputs may alias each other.
                grads[pid] = grads[pid] + pg
        grads[nid] = None  # free intermediate gradient storage

    out: dict[int, np.ndarray] = {}
    for lid in tape._leaf_ids:
        g = grads[lid] if lid < len(grads) else None
        out[lid] = g if g is not None else np.zeros(nodes[lid].value.shape)
    return out


def grad_check(f, params: dict[str, np.ndarray], eps: float = 1e-5) -> float:
    """Compare tape gradients of a scalar function against central differences.

    ``f`` evaluates the function on ``params`` and returns
    ``(loss_value, grads)`` where ``grads`` maps each parameter name to its
    tape gradient.  Every parameter entry is perturbed by +-eps in place;
    the reported score is the maximum of
    ``|g_tape - g_fd| / max(1e-8, |g_tape| + |g_fd|)`` over all entries.
    """
    if eps <= 0:
        raise ValueError("grad_check: eps must be positive")
    _, tape_grads = f(params)
    worst = 0.0
    for name, theta in params.items():
        flat = theta.reshape(-1)
        gflat = np.asarray(tape_grads[name]).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = f(params)[0]
            flat[i] = orig - eps
            f_minus = f(params)[0]
            flat[i] = orig
            fd = (f_plus - f_minus) / (2.0 * eps)
            err = abs(gflat[i] - fd) / max(1e-8, abs(gflat[i]) + abs(fd))
            if err > worst:
                worst = err
    return worst
