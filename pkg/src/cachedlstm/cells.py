"""Single-timestep recurrent cells: RNN, LSTM, CIFG-LSTM, and grouped-memory CLSTM.

All cells share the same conventions: inputs are row-batched (B x d), hidden
and memory states are B x H, weights are stored input-side as H x d and
recurrent-side as H x H, and a step computes ``x @ W^T + h @ U^T`` gates.

The CLSTM cell partitions its H units into K equal groups.  Each group k has
its own update rate r_k, produced by squashing a sigmoid into the interval
((k-1)/K, k/K), so group 1 changes slowest (long-term memory) and group K
fastest (cache-like short-term memory).  Group weights are stored as one
concatenated matrix per gate with block addressing; see ``ClstmParams``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .autodiff import (
    ShapeError,
    Tape,
    Var,
    add,
    add_const,
    add_rowvec,
    matmul,
    mul,
    mul_const,
    sigmoid,
    slice_cols,
    sub_from_one,
    tanh_,
    transpose,
)

CELL_KINDS = ("rnn", "lstm", "cifg", "clstm")

INIT_SCALE = 0.1  # weights start uniform in [-INIT_SCALE, INIT_SCALE]


def _shape(t) -> tuple[int, int]:
    return tuple(t.shape)


@dataclass
class RnnParams:
    """Elman cell weights: h' = tanh(W x + U h)."""

    w: object  # (H, d)
    u: object  # (H, H)
    b: object | None = None  # (H, 1)

    def __post_init__(self):
        h, d = _shape(self.w)
        if _shape(self.u) != (h, h):
            raise ShapeError(f"RnnParams: U must be {h}x{h}, got {_shape(self.u)}")
        if self.b is not None and _shape(self.b) != (h, 1):
            raise ShapeError(f"RnnParams: b must be {h}x1, got {_shape(self.b)}")

    @property
    def hidden_size(self) -> int:
        return _shape(self.w)[0]


@dataclass
class LstmParams:
    """Standard LSTM weights for the input, forget, output, and candidate paths."""

    w_i: object
    w_f: object
    w_o: object
    w_c: object
    u_i: object
    u_f: object
    u_o: object
    u_c: object
    b_i: object | None = None
    b_f: object | None = None
    b_o: object | None = None
    b_c: object | None = None

    def __post_init__(self):
        h, d = _shape(self.w_i)
        for name in ("w_f", "w_o", "w_c"):
            if _shape(getattr(self, name)) != (h, d):
                raise ShapeError(
                    f"LstmParams: {name} must be {h}x{d}, got {_shape(getattr(self, name))}"
                )
        for name in ("u_i", "u_f", "u_o", "u_c"):
            if _shape(getattr(self, name)) != (h, h):
                raise ShapeError(
                    f"LstmParams: {name} must be {h}x{h}, got {_shape(getattr(self, name))}"
                )
        for name in ("b_i", "b_f", "b_o", "b_c"):
            t = getattr(self, name)
            if t is not None and _shape(t) != (h, 1):
                raise ShapeError(f"LstmParams: {name} must be {h}x1, got {_shape(t)}")

    @property
    def hidden_size(self) -> int:
        return _shape(self.w_i)[0]


@dataclass
class CifgParams:
    """Coupled input/forget gate LSTM weights; the input gate is 1 - f."""

    w_f: object
    w_o: object
    w_c: object
    u_f: object
    u_o: object
    u_c: object
    b_f: object | None = None
    b_o: object | None = None
    b_c: object | None = None

    def __post_init__(self):
        h, d = _shape(self.w_f)
        for name in ("w_o", "w_c"):
            if _shape(getattr(self, name)) != (h, d):
                raise ShapeError(
                    f"CifgParams: {name} must be {h}x{d}, got {_shape(getattr(self, name))}"
                )
        for name in ("u_f", "u_o", "u_c"):
            if _shape(getattr(self, name)) != (h, h):
                raise ShapeError(
                    f"CifgParams: {name} must be {h}x{h}, got {_shape(getattr(self, name))}"
                )
        for name in ("b_f", "b_o", "b_c"):
            t = getattr(self, name)
            if t is not None and _shape(t) != (h, 1):
                raise ShapeError(f"CifgParams: {name} must be {h}x1, got {_shape(t)}")

    @property
    def hidden_size(self) -> int:
        return _shape(self.w_f)[0]


@dataclass
class ClstmParams:
    """Grouped-memory cell weights, stored concatenated with block addressing.

    For K groups of size H/K, the per-group input matrices W^k (gate g) are
    stacked vertically into one H x d matrix ``w_g``, and the cross-group
    recurrent matrices U^{j->k} form the H x H matrix ``u_g`` whose block at
    rows of group k and columns of group j is U^{j->k}.  One ``x @ w_g^T +
    h_all @ u_g^T`` product therefore evaluates every group's gate, including
    all K^2 cross-group terms, and ``w_block``/``u_block`` address the
    individual matrices of the per-group formulation.
    """

    n_groups: int
    w_r: object  # (H, d) update-rate gate, group blocks stacked
    w_o: object
    w_c: object
    u_r: object  # (H, H) cross-group blocks
    u_o: object
    u_c: object
    b_r: object | None = None
    b_o: object | None = None
    b_c: object | None = None

    def __post_init__(self):
        h, d = _shape(self.w_r)
        if self.n_groups < 1:
            raise ValueError(f"ClstmParams: n_groups must be >= 1, got {self.n_groups}")
        if h % self.n_groups != 0:
            raise ValueError(
                f"ClstmParams: hidden size {h} not divisible by {self.n_groups} groups"
            )
        for name in ("w_o", "w_c"):
            if _shape(getattr(self, name)) != (h, d):
                raise ShapeError(
                    f"ClstmParams: {name} must be {h}x{d}, got {_shape(getattr(self, name))}"
                )
        for name in ("u_r", "u_o", "u_c"):
            if _shape(getattr(self, name)) != (h, h):
                raise ShapeError(
                    f"ClstmParams: {name} must be {h}x{h}, got {_shape(getattr(self, name))}"
                )
        for name in ("b_r", "b_o", "b_c"):
            t = getattr(self, name)
            if t is not None and _shape(t) != (h, 1):
                raise ShapeError(f"ClstmParams: {name} must be {h}x1, got {_shape(t)}")

    @property
    def hidden_size(self) -> int:
        return _shape(self.w_r)[0]

    @property
    def group_size(self) -> int:
        return self.hidden_size // self.n_groups

    def _rows(self, k: int) -> slice:
        if not 1 <= k <= self.n_groups:
            raise ValueError(f"group index {k} out of range 1..{self.n_groups}")
        gs = self.group_size
        return slice((k - 1) * gs, k * gs)

    def w_block(self, gate: str, k: int) -> np.ndarray:
        """Input matrix of group k (1-based) for gate 'r', 'o', or 'c'."""
        return getattr(self, f"w_{gate}")[self._rows(k), :]

    def u_block(self, gate: str, j: int, k: int) -> np.ndarray:
        """Recurrent matrix U^{j->k} (1-based) for gate 'r', 'o', or 'c'."""
        return getattr(self, f"u_{gate}")[self._rows(k), self._rows(j)]


@dataclass
class CellState:
    """Memory and hidden state, groups stored concatenated along columns.

    ``c`` is None for the plain RNN, which carries only a hidden state.
    Group k (1-based) occupies columns [(k-1)*H/K, k*H/K); ``c_group`` and
    ``h_group`` slice it out as tape operations.
    """

    c: Var | None
    h: Var
    n_groups: int = 1

    @property
    def group_size(self) -> int:
        return self.h.cols // self.n_groups

    def _span(self, k: int) -> tuple[int, int]:
        if not 1 <= k <= self.n_groups:
            raise ValueError(f"group index {k} out of range 1..{self.n_groups}")
        gs = self.group_size
        return (k - 1) * gs, k * gs

    def c_group(self, k: int) -> Var:
        lo, hi = self._span(k)
        return slice_cols(self.c, lo, hi)

    def h_group(self, k: int) -> Var:
        lo, hi = self._span(k)
        return slice_cols(self.h, lo, hi)


@dataclass
class ForgetRates:
    """Per-group update rates of one CLSTM step, concatenated along columns.

    Every entry of group k lies strictly in ((k-1)/K, k/K), so the group
    ranges are disjoint and ordered.
    """

    r: Var
    n_groups: int

    @property
    def group_size(self) -> int:
        return self.r.cols // self.n_groups

    def group(self, k: int) -> Var:
        if not 1 <= k <= self.n_groups:
            raise ValueError(f"group index {k} out of range 1..{self.n_groups}")
        gs = self.group_size
        return slice_cols(self.r, (k - 1) * gs, k * gs)


def zero_state(tape: Tape, batch: int, hidden: int, n_groups: int = 1,
               with_memory: bool = True) -> CellState:
    """All-zero initial state at t=0."""
    z = tape.leaf(np.zeros((batch, hidden)))
    c = tape.leaf(np.zeros((batch, hidden))) if with_memory else None
    return CellState(c=c, h=z, n_groups=n_groups)


def _gate_pre(x: Var, h: Var, w, u, b) -> Var:
    pre = add(matmul(x, transpose(w)), matmul(h, transpose(u)))
    if b is not None:
        pre = add_rowvec(pre, transpose(b))
    return pre


def lstm_step(p: LstmParams, x: Var, prev: CellState) -> CellState:
    """One LSTM transition.

    i = sigmoid(W_i x + U_i h),  f = sigmoid(W_f x + U_f h),
    o = sigmoid(W_o x + U_o h),  c~ = tanh(W_c x + U_c h),
    c' = f * c + i * c~,         h' = o * tanh(c').
    """
    h = prev.h
    i = sigmoid(_gate_pre(x, h, p.w_i, p.u_i, p.b_i))
    f = sigmoid(_gate_pre(x, h, p.w_f, p.u_f, p.b_f))
    o = sigmoid(_gate_pre(x, h, p.w_o, p.u_o, p.b_o))
    ctil = tanh_(_gate_pre(x, h, p.w_c, p.u_c, p.b_c))
    c_new = add(mul(f, prev.c), mul(i, ctil))
    h_new = mul(o, tanh_(c_new))
    return CellState(c=c_new, h=h_new, n_groups=1)


def cifg_step(p: CifgParams, x: Var, prev: CellState) -> CellState:
    """LSTM step with the input gate coupled to the forget gate as 1 - f."""
    h = prev.h
    f = sigmoid(_gate_pre(x, h, p.w_f, p.u_f, p.b_f))
    o = sigmoid(_gate_pre(x, h, p.w_o, p.u_o, p.b_o))
    ctil = tanh_(_gate_pre(x, h, p.w_c, p.u_c, p.b_c))
    c_new = add(mul(f, prev.c), mul(sub_from_one(f), ctil))
    h_new = mul(o, tanh_(c_new))
    return CellState(c=c_new, h=h_new, n_groups=1)


def squash(z: Var, k: int, n_groups: int) -> Var:
    """Affine squash z/K + (k-1)/K confining group k's rate to ((k-1)/K, k/K).

    ``k`` is 1-based; with a single group this is the identity map.
    """
    if not 1 <= k <= n_groups:
        raise ValueError(f"squash: group index {k} out of range 1..{n_groups}")
    return add_const(mul_const(z, 1.0 / n_groups), (k - 1) / n_groups)


def _squash_offsets(hidden: int, n_groups: int) -> np.ndarray:
    """Row of per-column squash offsets (k-1)/K for the concatenated layout."""
    gs = hidden // n_groups
    return np.repeat(np.arange(n_groups) / n_groups, gs).reshape(1, hidden)


def clstm_step(p: ClstmParams, x: Var, prev: CellState) -> tuple[CellState, ForgetRates]:
    """One grouped-memory transition; every group reads all groups' hidden states.

    Per group k:
      r_k = squash_k(sigmoid(W_r^k x + sum_j U_r^{j->k} h_j))
      o_k = sigmoid(W_o^k x + sum_j U_o^{j->k} h_j)
      c~_k = tanh(W_c^k x + sum_j U_c^{j->k} h_j)
      c_k' = (1 - r_k) * c_k + r_k * c~_k
      h_k' = o_k * tanh(c_k')

    Small r_k means long retention: the candidate is blended in at rate r_k.
    Evaluated for all groups at once through the concatenated weights.
    """
    if prev.n_groups != p.n_groups:
        raise ShapeError(
            f"clstm_step: state has {prev.n_groups} groups, params {p.n_groups}"
        )
    k = p.n_groups
    h = prev.h
    z = sigmoid(_gate_pre(x, h, p.w_r, p.u_r, p.b_r))
    r = add_const(mul_const(z, 1.0 / k), _squash_offsets(p.hidden_size, k))
    o = sigmoid(_gate_pre(x, h, p.w_o, p.u_o, p.b_o))
    ctil = tanh_(_gate_pre(x, h, p.w_c, p.u_c, p.b_c))
    c_new = add(mul(sub_from_one(r), prev.c), mul(r, ctil))
    h_new = mul(o, tanh_(c_new))
    return CellState(c=c_new, h=h_new, n_groups=k), ForgetRates(r=r, n_groups=k)


def rnn_step(p: RnnParams, x: Var, prev_h: Var) -> Var:
    """Elman transition h' = tanh(W x + U h)."""
    return tanh_(_gate_pre(x, prev_h, p.w, p.u, p.b))


def init_params(kind: str, d: int, hidden: int, n_groups: int = 1, seed=0,
                use_bias: bool = False):
    """Seeded parameter set with every weight entry i.i.d. uniform [-0.1, 0.1].

    Biases, when enabled, start at zero.  Draw order is fixed (input
    matrices in gate order, then recurrent matrices) so a seed fully
    determines the parameters.
    """
    if kind not in CELL_KINDS:
        raise ValueError(f"unknown cell kind {kind!r}; expected one of {CELL_KINDS}")
    if kind == "clstm" and hidden % n_groups != 0:
        raise ValueError(
            f"hidden size {hidden} not divisible into {n_groups} groups"
        )
    rng = np.random.default_rng(seed)

    def u(rows, cols):
        return rng.uniform(-INIT_SCALE, INIT_SCALE, size=(rows, cols))

    def zb():
        return np.zeros((hidden, 1)) if use_bias else None

    if kind == "rnn":
        return RnnParams(w=u(hidden, d), u=u(hidden, hidden), b=zb())
    if kind == "lstm":
        return LstmParams(
            w_i=u(hidden, d), w_f=u(hidden, d), w_o=u(hidden, d), w_c=u(hidden, d),
            u_i=u(hidden, hidden), u_f=u(hidden, hidden),
            u_o=u(hidden, hidden), u_c=u(hidden, hidden),
            b_i=zb(), b_f=zb(), b_o=zb(), b_c=zb(),
        )
    if kind == "cifg":
        return CifgParams(
            w_f=u(hidden, d), w_o=u(hidden, d), w_c=u(hidden, d),
            u_f=u(hidden, hidden), u_o=u(hidden, hidden), u_c=u(hidden, hidden),
            b_f=zb(), b_o=zb(), b_c=zb(),
        )
    return ClstmParams(
        n_groups=n_groups,
        w_r=u(hidden, d), w_o=u(hidden, d), w_c=u(hidden, d),
        u_r=u(hidden, hidden), u_o=u(hidden, hidden), u_c=u(hidden, hidden),
        b_r=zb(), b_o=zb(), b_c=zb(),
    )


def bind_params(tape: Tape, params):
    """Register a parameter container's tensors as tape leaves.

    Returns (bound, leaves): a copy of the container whose tensor fields are
    Vars, and a name -> Var map for gradient lookup after backward.
    """
    leaves: dict[str, Var] = {}
    reps = {}
    for field in dataclasses.fields(params):
        t = getattr(params, field.name)
        if isinstance(t, np.ndarray):
            v = tape.leaf(t)
            leaves[field.name] = v
            reps[field.name] = v
    return dataclasses.replace(params, **reps), leaves


def named_tensors(params) -> dict[str, np.ndarray]:
    """The container's tensor fields by name, in declaration order."""
    out = {}
    for field in dataclasses.fields(params):
        t = getattr(params, field.name)
        if isinstance(t, np.ndarray):
            out[field.name] = t
    return out
