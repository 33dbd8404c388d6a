"""Bidirectional GRU sentence encoder with context-conditioned self-attention.

Scoring for one sentence with encoder states H (T x w) and the previous
conversation state g_prev (as a column vector):

    S = W_s2 @ tanh(W_s1 @ H^T + W_s3 @ g_prev + b)        # (heads x T)
    A = row_softmax(S)
    M = A @ H                                              # (heads x w)

The conversation term W_s3 @ g_prev and the bias are column-constant, so
they shift scores identically for every token; the bias lives inside the
tanh, making the scorer a two-layer MLP with a hidden width of d_a.
The flattened M is the fixed-size sentence representation regardless of T.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bilm import init_matrix, init_zeros
from .errors import DataError, ShapeError
from .params import ParamStore
from .rng import SeededRng
from .tensor import (
    Tensor,
    _accumulate,
    add,
    concat_cols,
    lookup_rows,
    matmul,
    mul,
    reshape,
    row,
    rsub_const,
    sigmoid,
    softmax_rows,
    tanh,
    transpose,
)


class GruCell:
    """Single-direction GRU: h' = (1-z) * h + z * candidate."""

    def __init__(self, W_z, U_z, b_z, W_r, U_r, b_r, W_h, U_h, b_h,
                 input_width: int, hidden: int):
        self.W_z, self.U_z, self.b_z = W_z, U_z, b_z
        self.W_r, self.U_r, self.b_r = W_r, U_r, b_r
        self.W_h, self.U_h, self.b_h = W_h, U_h, b_h
        self.input_width = input_width
        self.hidden = hidden

    @classmethod
    def build(cls, store: ParamStore, prefix: str, input_width: int, hidden: int,
              rng: SeededRng) -> "GruCell":
        def mat(name, rows, cols):
            return init_matrix(store, f"{prefix}.{name}", rows, cols, rng)

        return cls(
            mat("W_z", input_width, hidden), mat("U_z", hidden, hidden),
            init_zeros(store, f"{prefix}.b_z", 1, hidden),
            mat("W_r", input_width, hidden), mat("U_r", hidden, hidden),
            init_zeros(store, f"{prefix}.b_r", 1, hidden),
            mat("W_h", input_width, hidden), mat("U_h", hidden, hidden),
            init_zeros(store, f"{prefix}.b_h", 1, hidden),
            input_width, hidden,
        )

    def initial_state(self) -> Tensor:
        return Tensor(np.zeros((1, self.hidden)))

    def step(self, x: Tensor, h: Tensor) -> Tensor:
        if x.cols != self.input_width:
            raise ShapeError(f"GRU input width {x.cols}, expected {self.input_width}")
        z = sigmoid(add(add(matmul(x, self.W_z), matmul(h, self.U_z)), self.b_z))
        r = sigmoid(add(add(matmul(x, self.W_r), matmul(h, self.U_r)), self.b_r))
        cand = tanh(add(add(matmul(x, self.W_h), matmul(mul(r, h), self.U_h)), self.b_h))
        return add(mul(rsub_const(1.0, z), h), mul(z, cand))

    def run(self, inputs: Tensor, reverse: bool = False,
            initial: Tensor | None = None) -> list[Tensor]:
        """Position-aligned states from one graph node per step; the slow
        reference twin of run_fused."""
        T = inputs.rows
        bulk_z = add(matmul(inputs, self.W_z), self.b_z)
        bulk_r = add(matmul(inputs, self.W_r), self.b_r)
        bulk_h = add(matmul(inputs, self.W_h), self.b_h)
        h = initial if initial is not None else self.initial_state()
        states: list[Tensor | None] = [None] * T
        order = range(T - 1, -1, -1) if reverse else range(T)
        for t in order:
            z = sigmoid(add(row(bulk_z, t), matmul(h, self.U_z)))
            r = sigmoid(add(row(bulk_r, t), matmul(h, self.U_r)))
            cand = tanh(add(row(bulk_h, t), matmul(mul(r, h), self.U_h)))
            h = add(mul(rsub_const(1.0, z), h), mul(z, cand))
            states[t] = h
        return states  # type: ignore[return-value]

    def run_fused(self, inputs: Tensor, reverse: bool = False,
                  initial: Tensor | None = None) -> Tensor:
        """Whole recurrence as one graph node returning (T, hidden) states.

        The backward pass is hand-unrolled truncation-free BPTT; run() is the
        op-by-op reference it is checked against, and the finite-difference
        harness covers the gradients.
        """
        if inputs.cols != self.input_width:
            raise ShapeError(f"GRU input width {inputs.cols}, expected {self.input_width}")
        T, u = inputs.rows, self.hidden
        x = inputs.value
        Wz, Uz, bz = self.W_z, self.U_z, self.b_z
        Wr, Ur, br = self.W_r, self.U_r, self.b_r
        Wh, Uh, bh = self.W_h, self.U_h, self.b_h
        bulk_z = x @ Wz.value + bz.value
        bulk_r = x @ Wr.value + br.value
        bulk_h = x @ Wh.value + bh.value
        steps = list(range(T - 1, -1, -1)) if reverse else list(range(T))

        H = np.empty((T, u))
        Z = np.empty((T, u))
        R = np.empty((T, u))
        C = np.empty((T, u))
        Hprev = np.empty((T, u))
        h = (initial.value[0] if initial is not None else np.zeros(u)).copy()
        for t in steps:
            hp = h
            z = 1.0 / (1.0 + np.exp(-np.clip(bulk_z[t] + hp @ Uz.value, -700.0, 700.0)))
            r = 1.0 / (1.0 + np.exp(-np.clip(bulk_r[t] + hp @ Ur.value, -700.0, 700.0)))
            c = np.tanh(bulk_h[t] + (r * hp) @ Uh.value)
            h = (1.0 - z) * hp + z * c
            Z[t], R[t], C[t], Hprev[t], H[t] = z, r, c, hp, h

        parents: tuple[Tensor, ...] = (inputs, Wz, Uz, bz, Wr, Ur, br, Wh, Uh, bh)
        if initial is not None:
            parents = parents + (initial,)

        def backward(g: np.ndarray) -> None:
            d_bulk_z = np.zeros((T, u))
            d_bulk_r = np.zeros((T, u))
            d_bulk_h = np.zeros((T, u))
            dUz = np.zeros_like(Uz.value)
            dUr = np.zeros_like(Ur.value)
            dUh = np.zeros_like(Uh.value)
            dh = np.zeros(u)
            for t in reversed(steps):
                dh = dh + g[t]
                z, r, c, hp = Z[t], R[t], C[t], Hprev[t]
                dz_pre = dh * (c - hp) * z * (1.0 - z)
                dc_pre = dh * z * (1.0 - c * c)
                dh_prev = dh * (1.0 - z)
                d_bulk_z[t] = dz_pre
                dUz += np.outer(hp, dz_pre)
                dh_prev += dz_pre @ Uz.value.T
                d_bulk_h[t] = dc_pre
                dUh += np.outer(r * hp, dc_pre)
                drh = dc_pre @ Uh.value.T
                dh_prev += drh * r
                dr_pre = drh * hp * r * (1.0 - r)
                d_bulk_r[t] = dr_pre
                dUr += np.outer(hp, dr_pre)
                dh_prev += dr_pre @ Ur.value.T
                dh = dh_prev
            _accumulate(Wz, x.T @ d_bulk_z, fresh=True)
            _accumulate(Wr, x.T @ d_bulk_r, fresh=True)
            _accumulate(Wh, x.T @ d_bulk_h, fresh=True)
            _accumulate(bz, d_bulk_z.sum(axis=0, keepdims=True), fresh=True)
            _accumulate(br, d_bulk_r.sum(axis=0, keepdims=True), fresh=True)
            _accumulate(bh, d_bulk_h.sum(axis=0, keepdims=True), fresh=True)
            _accumulate(Uz, dUz, fresh=True)
            _accumulate(Ur, dUr, fresh=True)
            _accumulate(Uh, dUh, fresh=True)
            _accumulate(inputs,
                        d_bulk_z @ Wz.value.T + d_bulk_r @ Wr.value.T + d_bulk_h @ Wh.value.T,
                        fresh=True)
            if initial is not None:
                _accumulate(initial, dh.reshape(1, -1), fresh=True)

        return Tensor._op(H, parents, backward)


class BiGru:
    """Forward and backward GRUs over the same inputs, states concatenated."""

    def __init__(self, fwd: GruCell, bwd: GruCell):
        if fwd.input_width != bwd.input_width or fwd.hidden != bwd.hidden:
            raise ShapeError("forward/backward GRU widths must match")
        self.fwd = fwd
        self.bwd = bwd

    @classmethod
    def build(cls, store: ParamStore, prefix: str, input_width: int, hidden: int,
              rng: SeededRng) -> "BiGru":
        return cls(
            GruCell.build(store, f"{prefix}.fwd", input_width, hidden, rng),
            GruCell.build(store, f"{prefix}.bwd", input_width, hidden, rng),
        )

    @property
    def hidden(self) -> int:
        return self.fwd.hidden

    def encode(self, inputs: Tensor) -> Tensor:
        """(T, 2*hidden): forward half reads the prefix, backward the suffix."""
        if inputs.rows == 0:
            raise DataError("empty input to GRU encoder")
        return concat_cols([
            self.fwd.run_fused(inputs, reverse=False),
            self.bwd.run_fused(inputs, reverse=True),
        ])


def bigru_encode(gru: BiGru, embeddings: Tensor) -> Tensor:
    return gru.encode(embeddings)


class ContextualAttention:
    """Parameters of the score MLP; `heads` independent score rows."""

    def __init__(self, W_s1: Tensor, W_s2: Tensor, W_s3: Tensor, b: Tensor,
                 heads: int, d_a: int, encoder_width: int, context_width: int):
        self.W_s1, self.W_s2, self.W_s3, self.b = W_s1, W_s2, W_s3, b
        self.heads = heads
        self.d_a = d_a
        self.encoder_width = encoder_width
        self.context_width = context_width

    @classmethod
    def build(cls, store: ParamStore, prefix: str, encoder_width: int,
              context_width: int, heads: int, d_a: int, rng: SeededRng) -> "ContextualAttention":
        if heads < 1 or d_a < 1:
            raise ShapeError("attention needs heads >= 1 and d_a >= 1")
        W_s1 = init_matrix(store, f"{prefix}.W_s1", d_a, encoder_width, rng, fan_in=encoder_width)
        W_s2 = init_matrix(store, f"{prefix}.W_s2", heads, d_a, rng, fan_in=d_a)
        W_s3 = init_matrix(store, f"{prefix}.W_s3", d_a, context_width, rng, fan_in=context_width)
        b = init_zeros(store, f"{prefix}.b", d_a, 1)
        return cls(W_s1, W_s2, W_s3, b, heads, d_a, encoder_width, context_width)

    def zero_context(self) -> Tensor:
        return Tensor(np.zeros((self.context_width, 1)))


@dataclass
class SentenceRepresentation:
    """Attended matrix M (heads x w) and its flattening R (1 x heads*w)."""

    M: Tensor
    R: Tensor
    attention: Tensor  # (heads x T) row-stochastic


def attention_scores(att: ContextualAttention, H: Tensor, g_prev: Tensor) -> Tensor:
    """(heads x T) scores; g_prev is the previous conversation state as a
    (context_width, 1) column, zero for the first utterance."""
    if H.cols != att.encoder_width:
        raise ShapeError(f"encoder states H have width {H.cols}, attention expects {att.encoder_width}")
    if g_prev.shape != (att.context_width, 1):
        raise ShapeError(f"context g_prev has shape {g_prev.shape}, expected ({att.context_width}, 1)")
    pre = add(add(matmul(att.W_s1, transpose(H)), matmul(att.W_s3, g_prev)), att.b)
    return matmul(att.W_s2, tanh(pre))


def attend(S: Tensor, H: Tensor) -> SentenceRepresentation:
    """Row-softmax the scores and pool the encoder states."""
    if S.cols != H.rows:
        raise ShapeError(f"scores cover {S.cols} positions but H has {H.rows}")
    A = softmax_rows(S)
    M = matmul(A, H)
    return SentenceRepresentation(M=M, R=reshape(M, 1, M.rows * M.cols), attention=A)


def encode_sentence(embedding: Tensor, gru: BiGru, att: ContextualAttention,
                    token_ids: list[int], g_prev: Tensor) -> SentenceRepresentation:
    """embed -> BiGRU -> scores conditioned on g_prev -> attended pooling."""
    if not token_ids:
        raise DataError("empty token sequence")
    E = lookup_rows(embedding, token_ids)
    H = gru.encode(E)
    S = attention_scores(att, H, g_prev)
    return attend(S, H)
