"""Two-direction LSTM language model and task-weighted layer mixing.

The model keeps one hidden-state stack per direction and layer. Layer 0 of
the exposed stack is the context-independent embedding; layer j >= 1
concatenates the forward state (prefix context) and backward state (suffix
context) at each position. Both directions share one output softmax matrix.

Mixing collapses the stack into one vector per position:

    mixed_k = gamma * sum_j softmax(raw)_j * stack[j][k]

after every layer has been projected to a common width.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, ShapeError
from .params import ParamStore
from .rng import SeededRng
from .tensor import (
    Tensor,
    _accumulate,
    add,
    concat_cols,
    cross_entropy,
    lookup_rows,
    matmul,
    mul,
    row,
    sigmoid,
    slice_cols,
    slice_rows,
    softmax_rows,
    tanh,
    transpose,
)


def init_matrix(store: ParamStore, name: str, rows: int, cols: int,
                rng: SeededRng, fan_in: int | None = None) -> Tensor:
    """uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)); fan_in defaults to rows."""
    bound = 1.0 / (fan_in if fan_in is not None else rows) ** 0.5
    return store.add(name, rng.uniform_matrix(rows, cols, -bound, bound))


def init_zeros(store: ParamStore, name: str, rows: int, cols: int) -> Tensor:
    return store.add(name, np.zeros((rows, cols)))


class LstmLayer:
    """One LSTM layer with combined gate matrices, order [i|f|g|o]."""

    def __init__(self, W: Tensor, U: Tensor, b: Tensor, hidden: int):
        self.W = W
        self.U = U
        self.b = b
        self.hidden = hidden

    @classmethod
    def build(cls, store: ParamStore, prefix: str, input_width: int, hidden: int,
              rng: SeededRng) -> "LstmLayer":
        W = init_matrix(store, f"{prefix}.W", input_width, 4 * hidden, rng)
        U = init_matrix(store, f"{prefix}.U", hidden, 4 * hidden, rng)
        b = init_zeros(store, f"{prefix}.b", 1, 4 * hidden)
        return cls(W, U, b, hidden)

    def run(self, inputs: Tensor, reverse: bool = False) -> list[Tensor]:
        """States (1, hidden) per position from one graph node per step; the
        slow reference twin of run_fused."""
        T = inputs.rows
        h = self.hidden
        bulk = add(matmul(inputs, self.W), self.b)
        state = Tensor([[0.0] * h])
        cell = Tensor([[0.0] * h])
        order = range(T - 1, -1, -1) if reverse else range(T)
        states: list[Tensor | None] = [None] * T
        for t in order:
            pre = add(row(bulk, t), matmul(state, self.U))
            gate_i = sigmoid(slice_cols(pre, 0, h))
            gate_f = sigmoid(slice_cols(pre, h, 2 * h))
            gate_g = tanh(slice_cols(pre, 2 * h, 3 * h))
            gate_o = sigmoid(slice_cols(pre, 3 * h, 4 * h))
            cell = add(mul(gate_f, cell), mul(gate_i, gate_g))
            state = mul(gate_o, tanh(cell))
            states[t] = state
        return states  # type: ignore[return-value]

    def run_fused(self, inputs: Tensor, reverse: bool = False) -> Tensor:
        """Whole recurrence as one graph node returning (T, hidden) states,
        with hand-unrolled BPTT; run() is the reference it is checked against."""
        T, u = inputs.rows, self.hidden
        x = inputs.value
        W, U, b = self.W, self.U, self.b
        bulk = x @ W.value + b.value
        steps = list(range(T - 1, -1, -1)) if reverse else list(range(T))

        def sig(a):
            return 1.0 / (1.0 + np.exp(-np.clip(a, -700.0, 700.0)))

        I = np.empty((T, u))
        F = np.empty((T, u))
        G = np.empty((T, u))
        O = np.empty((T, u))
        TC = np.empty((T, u))
        Hprev = np.empty((T, u))
        Cprev = np.empty((T, u))
        H = np.empty((T, u))
        h = np.zeros(u)
        c = np.zeros(u)
        for t in steps:
            hp, cp = h, c
            pre = bulk[t] + hp @ U.value
            gi, gf = sig(pre[:u]), sig(pre[u:2 * u])
            gg, go = np.tanh(pre[2 * u:3 * u]), sig(pre[3 * u:])
            c = gf * cp + gi * gg
            tc = np.tanh(c)
            h = go * tc
            I[t], F[t], G[t], O[t], TC[t] = gi, gf, gg, go, tc
            Hprev[t], Cprev[t], H[t] = hp, cp, h

        def backward(g: np.ndarray) -> None:
            d_bulk = np.zeros((T, 4 * u))
            dU = np.zeros_like(U.value)
            dh = np.zeros(u)
            dc = np.zeros(u)
            for t in reversed(steps):
                dh = dh + g[t]
                gi, gf, gg, go, tc = I[t], F[t], G[t], O[t], TC[t]
                hp, cp = Hprev[t], Cprev[t]
                dcell = dc + dh * go * (1.0 - tc * tc)
                dpre = np.concatenate([
                    dcell * gg * gi * (1.0 - gi),
                    dcell * cp * gf * (1.0 - gf),
                    dcell * gi * (1.0 - gg * gg),
                    dh * tc * go * (1.0 - go),
                ])
                d_bulk[t] = dpre
                dU += np.outer(hp, dpre)
                dh = dpre @ U.value.T
                dc = dcell * gf
            _accumulate(W, x.T @ d_bulk, fresh=True)
            _accumulate(b, d_bulk.sum(axis=0, keepdims=True), fresh=True)
            _accumulate(U, dU, fresh=True)
            _accumulate(inputs, d_bulk @ W.value.T, fresh=True)

        return Tensor._op(H, (inputs, W, U, b), backward)


@dataclass
class LayerStack:
    """Per-position hidden vectors for layers 0..L (layer 0 = embeddings)."""

    layers: list[Tensor]

    def __post_init__(self):
        if not self.layers:
            raise ShapeError("layer stack needs at least one layer")
        T = self.layers[0].rows
        for j, layer in enumerate(self.layers):
            if layer.rows != T:
                raise ShapeError(f"layer {j} has {layer.rows} positions, expected {T}")

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def num_positions(self) -> int:
        return self.layers[0].rows

    def widths(self) -> list[int]:
        return [layer.cols for layer in self.layers]


class BiLm:
    """Embeddings + stacked forward/backward LSTMs + shared output softmax."""

    def __init__(self, embedding: Tensor, fwd: list[LstmLayer], bwd: list[LstmLayer],
                 out_proj: Tensor, vocab_size: int, d_emb: int, d_hid: int):
        self.embedding = embedding
        self.fwd = fwd
        self.bwd = bwd
        self.out_proj = out_proj
        self.vocab_size = vocab_size
        self.d_emb = d_emb
        self.d_hid = d_hid

    @classmethod
    def build(cls, store: ParamStore, prefix: str, vocab_size: int, d_emb: int,
              d_hid: int, num_layers: int, rng: SeededRng) -> "BiLm":
        if num_layers < 1:
            raise ShapeError("BiLM needs at least one LSTM layer")
        embedding = init_matrix(store, f"{prefix}.embedding", vocab_size, d_emb, rng,
                                fan_in=d_emb)
        fwd, bwd = [], []
        for j in range(num_layers):
            width = d_emb if j == 0 else d_hid
            fwd.append(LstmLayer.build(store, f"{prefix}.fwd{j}", width, d_hid, rng))
            bwd.append(LstmLayer.build(store, f"{prefix}.bwd{j}", width, d_hid, rng))
        out_proj = init_matrix(store, f"{prefix}.out_proj", d_hid, vocab_size, rng)
        return cls(embedding, fwd, bwd, out_proj, vocab_size, d_emb, d_hid)

    @property
    def num_layers(self) -> int:
        return len(self.fwd)

    def _direction_states(self, layers: list[LstmLayer], E: Tensor, reverse: bool) -> list[Tensor]:
        per_layer = []
        inputs = E
        for layer in layers:
            inputs = layer.run_fused(inputs, reverse=reverse)
            per_layer.append(inputs)
        return per_layer

    def forward(self, token_ids: list[int]) -> LayerStack:
        """Stack of L+1 layers; layer j >= 1 is (T, 2*d_hid) with the forward
        half first."""
        if not token_ids:
            raise DataError("empty token sequence")
        E = lookup_rows(self.embedding, token_ids)
        fwd_states = self._direction_states(self.fwd, E, reverse=False)
        bwd_states = self._direction_states(self.bwd, E, reverse=True)
        layers = [E]
        for f_layer, b_layer in zip(fwd_states, bwd_states):
            layers.append(concat_cols([f_layer, b_layer]))
        return LayerStack(layers)

    def loss(self, token_ids: list[int]) -> Tensor:
        """Negative mean log-likelihood, one mean per direction, summed.

        The forward pass predicts each token from its prefix, the backward
        pass from its suffix; both heads go through the shared softmax.
        """
        T = len(token_ids)
        if T < 2:
            raise DataError(f"language-model loss needs >= 2 tokens, got {T}")
        stack = self.forward(token_ids)
        top = stack.layers[-1]
        fwd_top = slice_cols(top, 0, self.d_hid)
        bwd_top = slice_cols(top, self.d_hid, 2 * self.d_hid)
        fwd_ctx = slice_rows(fwd_top, 0, T - 1)
        bwd_ctx = slice_rows(bwd_top, 1, T)
        loss_f = cross_entropy(matmul(fwd_ctx, self.out_proj), token_ids[1:])
        loss_b = cross_entropy(matmul(bwd_ctx, self.out_proj), token_ids[:-1])
        return add(loss_f, loss_b)


def bilm_forward(bilm: BiLm, token_ids: list[int]) -> LayerStack:
    return bilm.forward(token_ids)


def bilm_loss(bilm: BiLm, token_ids: list[int]) -> Tensor:
    return bilm.loss(token_ids)


class LayerMixer:
    """Softmax layer weights plus a global scale."""

    def __init__(self, raw_weights: Tensor, gamma: Tensor):
        self.raw_weights = raw_weights
        self.gamma = gamma

    @classmethod
    def build(cls, store: ParamStore, prefix: str, num_layers: int) -> "LayerMixer":
        raw = store.add(f"{prefix}.weights", np.zeros((num_layers, 1)))
        gamma = store.add(f"{prefix}.gamma", np.ones((1, 1)))
        return cls(raw, gamma)

    @property
    def num_layers(self) -> int:
        return self.raw_weights.rows

    def weights(self) -> Tensor:
        return softmax_rows(transpose(self.raw_weights))


def mix_layers(stack: LayerStack, mixer: LayerMixer) -> Tensor:
    """gamma-scaled softmax-weighted sum of the stack's layers, one row per
    position. All layers must already share a width."""
    if mixer.num_layers != stack.num_layers:
        raise ShapeError(
            f"mixer has {mixer.num_layers} weights but stack has {stack.num_layers} layers")
    widths = stack.widths()
    if len(set(widths)) != 1:
        raise ShapeError(f"layers must share a width before mixing, got {widths}")
    w = mixer.weights()
    acc = None
    for j, layer in enumerate(stack.layers):
        term = mul(layer, slice_cols(w, j, j + 1))
        acc = term if acc is None else add(acc, term)
    return mul(acc, mixer.gamma)


class LayerProjector:
    """Learned per-layer linear maps onto a common mixing width."""

    def __init__(self, maps: list[Tensor], d_mix: int):
        self.maps = maps
        self.d_mix = d_mix

    @classmethod
    def build(cls, store: ParamStore, prefix: str, widths: list[int], d_mix: int,
              rng: SeededRng) -> "LayerProjector":
        maps = [
            init_matrix(store, f"{prefix}.layer{j}", width, d_mix, rng)
            for j, width in enumerate(widths)
        ]
        return cls(maps, d_mix)

    def project(self, stack: LayerStack) -> LayerStack:
        if len(self.maps) != stack.num_layers:
            raise ShapeError(
                f"projector has {len(self.maps)} maps but stack has {stack.num_layers} layers")
        return LayerStack([matmul(layer, m) for layer, m in zip(stack.layers, self.maps)])
