"""Conversation-level recurrence linking utterance representations.

Each utterance's fixed-size representation is concatenated with the
embedding of the previous utterance's label (a reserved row stands in when
there is none) and fed to a single-direction GRU. The hidden state g both
feeds back into the attention scorer for the next utterance and joins the
final per-utterance representation handed to the classifier.

Label source per mode:
  gold       teacher forcing with the previous gold label (training)
  predicted  the classifier's running output (inference)
  none       always the reserved no-label row (ablation)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .attention import GruCell
from .bilm import init_matrix
from .errors import ConfigError, DataError, ShapeError
from .params import ParamStore
from .rng import SeededRng
from .tensor import Tensor, concat_cols, lookup_rows, transpose

LABEL_MODES = ("gold", "predicted", "none")


class CombinationRnn:
    def __init__(self, gru: GruCell, label_embedding: Tensor, num_labels: int,
                 rep_width: int, label_width: int):
        self.gru = gru
        self.label_embedding = label_embedding
        self.num_labels = num_labels
        self.rep_width = rep_width
        self.label_width = label_width

    @classmethod
    def build(cls, store: ParamStore, prefix: str, rep_width: int, num_labels: int,
              label_width: int, hidden: int, rng: SeededRng) -> "CombinationRnn":
        gru = GruCell.build(store, f"{prefix}.gru", rep_width + label_width, hidden, rng)
        # one extra row reserved for "no previous label"
        label_embedding = init_matrix(store, f"{prefix}.label_embedding",
                                      num_labels + 1, label_width, rng, fan_in=label_width)
        return cls(gru, label_embedding, num_labels, rep_width, label_width)

    @property
    def hidden(self) -> int:
        return self.gru.hidden

    def initial_state(self) -> Tensor:
        return self.gru.initial_state()

    def label_row(self, prev_label: int | None) -> int:
        if prev_label is None:
            return self.num_labels
        if not 0 <= prev_label < self.num_labels:
            raise IndexError(f"label id {prev_label} out of range for {self.num_labels} labels")
        return prev_label


def combine_step(rnn: CombinationRnn, g_prev: Tensor, rep: Tensor,
                 prev_label: int | None, include_rep: bool = True) -> tuple[Tensor, Tensor]:
    """One conversation step: returns (new state g, final representation F)."""
    if rep.shape != (1, rnn.rep_width):
        raise ShapeError(f"representation shape {rep.shape}, expected (1, {rnn.rep_width})")
    label = lookup_rows(rnn.label_embedding, [rnn.label_row(prev_label)])
    g_new = rnn.gru.run_fused(concat_cols([rep, label]), initial=g_prev)
    final = concat_cols([g_new, rep]) if include_rep else g_new
    return g_new, final


@dataclass
class ConversationRun:
    finals: list[Tensor] = field(default_factory=list)
    states: list[Tensor] = field(default_factory=list)
    predicted_labels: list[int] | None = None


def run_conversation(rnn: CombinationRnn,
                     encode_fn: Callable[[list[int], Tensor], Tensor],
                     token_id_seqs: list[list[int]],
                     label_mode: str,
                     gold_labels: list[int] | None = None,
                     classify_fn: Callable[[Tensor], int] | None = None,
                     include_rep: bool = True) -> ConversationRun:
    """Sequential pass over one conversation.

    `encode_fn(ids, g_prev_column)` produces the (1, rep_width) utterance
    representation; the previous state is handed to it as a column so the
    attention scorer can condition on it.
    """
    if not token_id_seqs:
        raise DataError("empty conversation")
    if label_mode not in LABEL_MODES:
        raise ConfigError(f"label_mode must be one of {LABEL_MODES}, got '{label_mode}'")
    if label_mode == "gold" and (gold_labels is None or len(gold_labels) != len(token_id_seqs)):
        raise ConfigError("gold label mode needs one gold label per utterance")
    if label_mode == "predicted" and classify_fn is None:
        raise ConfigError("predicted label mode needs a bound classifier")

    run = ConversationRun(predicted_labels=[] if label_mode == "predicted" else None)
    g = rnn.initial_state()
    prev: int | None = None
    for i, ids in enumerate(token_id_seqs):
        rep = encode_fn(ids, transpose(g))
        g, final = combine_step(rnn, g, rep, prev, include_rep)
        run.states.append(g)
        run.finals.append(final)
        if label_mode == "gold":
            prev = gold_labels[i]
        elif label_mode == "predicted":
            prev = classify_fn(final)
            run.predicted_labels.append(prev)
        else:
            prev = None
    return run
