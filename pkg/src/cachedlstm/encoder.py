"""Sequence encoders and the document classification head.

A document is a sequence of embedded token vectors.  The recurrent encoders
run a cell over the steps (optionally in both directions) and the document
representation is the final hidden state of the slowest group: for a K-group
cell that is h_1 at the last step, of width H/K, and for bidirectional runs
the backward pass's h_1 at the first step is concatenated on.  Group 1 has
the lowest update rate, so it is the part of the state that accumulates
document-scale evidence rather than recent-token detail.

Variable-length batches are handled with a per-step {0,1} mask: masked steps
carry the previous state through unchanged, and their recorded outputs are
zeroed.  Because the blend is c = m*new + (1-m)*old with m exactly 0 or 1,
padding steps are bit-neutral to the final state.

The bag-of-words encoder (tanh of the sum of token vectors) shares the same
classifier head and serves as the non-recurrent baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    ShapeError,
    Tape,
    Var,
    add,
    add_rowvec,
    concat_cols,
    matmul,
    mul,
    mul_colvec,
    sigmoid,
    slice_cols,
    softmax_rows,
    sub_from_one,
    tanh_,
    transpose,
)
from .cells import (
    CELL_KINDS,
    CellState,
    ForgetRates,
    cifg_step,
    clstm_step,
    lstm_step,
    rnn_step,
    zero_state,
)


@dataclass(frozen=True)
class EncoderConfig:
    """Static description of one recurrent encoder.

    cell_kind: one of 'rnn', 'lstm', 'cifg', 'clstm'.
    d: token vector width.  H: total hidden units.  K: memory groups
    (1 unless clstm).  C: number of output classes.
    """

    cell_kind: str
    d: int
    H: int
    K: int = 1
    C: int = 2
    bidirectional: bool = False

    def __post_init__(self):
        if self.cell_kind not in CELL_KINDS:
            raise ValueError(
                f"cell_kind must be one of {CELL_KINDS}, got {self.cell_kind!r}"
            )
        if self.d < 1 or self.H < 1:
            raise ValueError(f"d and H must be positive, got d={self.d}, H={self.H}")
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if self.cell_kind != "clstm" and self.K != 1:
            raise ValueError(f"K={self.K} only makes sense for clstm cells")
        if self.H % self.K != 0:
            raise ValueError(f"H={self.H} is not divisible by K={self.K}")
        if self.C < 2:
            raise ValueError(f"C must be >= 2, got {self.C}")

    @property
    def group_size(self) -> int:
        return self.H // self.K

    @property
    def rep_width(self) -> int:
        """Width of the document representation fed to the classifier."""
        return (2 if self.bidirectional else 1) * self.group_size


@dataclass
class EncodedSequence:
    """Recorded outputs of an encoder run over T steps.

    steps_fwd[t] is the forward hidden state after consuming token t (zeroed
    at masked steps); final_fwd is the state after the last step.  The
    backward fields hold the reverse-direction run aligned to the same t
    (steps_bwd[t] saw tokens T-1..t), or None for unidirectional runs.
    """

    cfg: EncoderConfig
    steps_fwd: list
    final_fwd: CellState
    rates_fwd: list | None = None
    steps_bwd: list | None = None
    final_bwd: CellState | None = None

    @property
    def n_steps(self) -> int:
        return len(self.steps_fwd)

    def step_output(self, t: int) -> Var:
        """Hidden state at step t, both directions concatenated if present."""
        if not 0 <= t < self.n_steps:
            raise IndexError(f"step {t} out of range 0..{self.n_steps - 1}")
        if self.steps_bwd is None:
            return self.steps_fwd[t]
        return concat_cols([self.steps_fwd[t], self.steps_bwd[t]])


def _step(cfg: EncoderConfig, params, x: Var, st: CellState):
    if cfg.cell_kind == "rnn":
        h = rnn_step(params, x, st.h)
        return CellState(c=None, h=h, n_groups=1), None
    if cfg.cell_kind == "lstm":
        return lstm_step(params, x, st), None
    if cfg.cell_kind == "cifg":
        return cifg_step(params, x, st), None
    new_st, rates = clstm_step(params, x, st)
    return new_st, rates


def _blend(new: Var, old: Var, m: Var, m_not: Var) -> Var:
    return add(mul_colvec(new, m), mul_colvec(old, m_not))


def encode_forward(cfg: EncoderConfig, params, xs: list, mask: list | None = None,
                   initial: CellState | None = None) -> EncodedSequence:
    """Run the cell left to right over xs (a list of B x d Vars).

    mask, when given, is a list of B x 1 Vars with entries in {0, 1}; a zero
    freezes that row's state for the step and zeroes the recorded output.
    """
    if not xs:
        raise ValueError("encode_forward: empty sequence")
    if mask is not None and len(mask) != len(xs):
        raise ShapeError(f"mask has {len(mask)} steps, inputs have {len(xs)}")
    tape = xs[0].tape
    batch = xs[0].rows
    if initial is None:
        st = zero_state(tape, batch, cfg.H, n_groups=cfg.K,
                        with_memory=cfg.cell_kind != "rnn")
    else:
        st = initial
    steps, rates_log = [], []
    for t, x in enumerate(xs):
        if x.cols != cfg.d:
            raise ShapeError(f"step {t}: input width {x.cols}, expected {cfg.d}")
        new_st, rates = _step(cfg, params, x, st)
        if mask is not None:
            m = mask[t]
            m_not = sub_from_one(m)
            h = _blend(new_st.h, st.h, m, m_not)
            c = None
            if new_st.c is not None:
                c = _blend(new_st.c, st.c, m, m_not)
            st = CellState(c=c, h=h, n_groups=cfg.K)
            steps.append(mul_colvec(new_st.h, m))
        else:
            st = new_st
            steps.append(new_st.h)
        if rates is not None:
            rates_log.append(rates)
    return EncodedSequence(
        cfg=cfg, steps_fwd=steps, final_fwd=st,
        rates_fwd=rates_log if rates_log else None,
    )


def encode_bidirectional(cfg: EncoderConfig, fwd_params, bwd_params, xs: list,
                         mask: list | None = None) -> EncodedSequence:
    """Forward and reverse runs over the same steps, outputs time-aligned.

    The reverse run consumes tokens last to first; with a mask the padded
    tail of each row is skipped exactly as in the forward direction, so the
    reverse final state reflects the row's first real token.
    """
    rev_mask = None if mask is None else list(reversed(mask))
    fwd = encode_forward(cfg, fwd_params, xs, mask=mask)
    bwd = encode_forward(cfg, bwd_params, list(reversed(xs)), mask=rev_mask)
    return EncodedSequence(
        cfg=cfg,
        steps_fwd=fwd.steps_fwd, final_fwd=fwd.final_fwd, rates_fwd=fwd.rates_fwd,
        steps_bwd=list(reversed(bwd.steps_fwd)), final_bwd=bwd.final_fwd,
    )


def doc_representation(enc: EncodedSequence) -> Var:
    """Slowest-group final hidden state; both directions when bidirectional.

    Width H/K, or 2H/K bidirectional.  With K = 1 this is the whole final
    hidden state, matching the usual last-state representation.
    """
    cfg = enc.cfg
    gs = cfg.group_size
    fwd_part = slice_cols(enc.final_fwd.h, 0, gs)
    if enc.final_bwd is None:
        return fwd_part
    return concat_cols([fwd_part, slice_cols(enc.final_bwd.h, 0, gs)])


@dataclass
class ClassifierParams:
    """Softmax head: p = softmax(W z + b) with W of C x rep_width, b of C x 1."""

    w: object
    b: object

    def __post_init__(self):
        c = self.w.shape[0]
        if tuple(self.b.shape) != (c, 1):
            raise ShapeError(
                f"ClassifierParams: b must be {c}x1, got {tuple(self.b.shape)}"
            )

    @property
    def n_classes(self) -> int:
        return self.w.shape[0]


def init_classifier(rep_width: int, n_classes: int, seed=0) -> ClassifierParams:
    """Uniform [-0.1, 0.1] weights, zero bias, seeded."""
    if n_classes < 2:
        raise ValueError(f"n_classes must be >= 2, got {n_classes}")
    rng = np.random.default_rng(seed)
    return ClassifierParams(
        w=rng.uniform(-0.1, 0.1, size=(n_classes, rep_width)),
        b=np.zeros((n_classes, 1)),
    )


def classify(rep: Var, clf: ClassifierParams) -> Var:
    """Class probabilities, one row per document; rows sum to 1."""
    logits = add_rowvec(matmul(rep, transpose(clf.w)), transpose(clf.b))
    return softmax_rows(logits)


def cbow_encode(xs: list, mask: list | None = None) -> Var:
    """Order-free document vector: tanh of the sum of token vectors.

    Masked steps contribute nothing.  Width equals the token vector width.
    """
    if not xs:
        raise ValueError("cbow_encode: empty sequence")
    if mask is not None and len(mask) != len(xs):
        raise ShapeError(f"mask has {len(mask)} steps, inputs have {len(xs)}")
    total = None
    for t, x in enumerate(xs):
        term = x if mask is None else mul_colvec(x, mask[t])
        total = term if total is None else add(total, term)
    return tanh_(total)
