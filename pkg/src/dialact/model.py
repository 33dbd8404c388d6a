"""Full classification model wired from the configured encoder paths.

Encoder choices:
  attention    embeddings -> BiGRU -> context-conditioned attention pooling
  bilm         language-model layer stack -> projection -> mixing ->
               context-conditioned attention pooling over the mixed vectors
  both-concat  both of the above, sentence representations concatenated

Either way a sentence becomes one fixed-width row; the combiner threads the
conversation state through those rows (and back into the attention scorer),
and the softmax head reads concat(state, sentence) unless configured to use
the state alone.
"""

from __future__ import annotations

import numpy as np

from .attention import BiGru, ContextualAttention, attend, attention_scores, encode_sentence
from .bilm import BiLm, LayerMixer, LayerProjector, LayerStack, init_matrix, mix_layers
from .classifier import ClassifierHead, FallbackRuleSet, Prediction, predict_with_fallback
from .combiner import CombinationRnn, combine_step, run_conversation
from .config import ModelConfig
from .corpus import Conversation, Taxonomy
from .errors import DataError
from .params import ParamStore
from .pca import pca_fit
from .rng import SeededRng
from .tensor import Tensor, concat_cols, concat_rows, cross_entropy, dropout, lookup_rows, matmul, no_grad, scale, transpose
from .vocab import TokenVocab


class DialogueModel:
    def __init__(self, config: ModelConfig, vocab: TokenVocab, taxonomy: Taxonomy,
                 rng: SeededRng):
        config.validate()
        self.config = config
        self.vocab = vocab
        self.taxonomy = taxonomy
        self.params = ParamStore()
        self.buffers: dict[str, np.ndarray] = {}
        self.rules = FallbackRuleSet.load(taxonomy)

        c = config
        vocab_size = len(vocab)
        num_labels = len(taxonomy)
        rep_width = 0

        self.gru: BiGru | None = None
        self.attn: ContextualAttention | None = None
        self.embedding: Tensor | None = None
        if c.encoder in ("attention", "both-concat"):
            self.embedding = init_matrix(self.params, "embed.E", vocab_size, c.d_emb,
                                         rng, fan_in=c.d_emb)
            self.gru = BiGru.build(self.params, "gru", c.d_emb, c.gru_hidden, rng)
            self.attn = ContextualAttention.build(
                self.params, "attn", 2 * c.gru_hidden, c.combiner_hidden,
                c.attn_heads, c.attn_hidden, rng)
            rep_width += c.attn_heads * 2 * c.gru_hidden

        self.bilm: BiLm | None = None
        self.projector: LayerProjector | None = None
        self.mixer: LayerMixer | None = None
        self.attn_lm: ContextualAttention | None = None
        if c.encoder in ("bilm", "both-concat"):
            self.bilm = BiLm.build(self.params, "bilm", vocab_size, c.d_emb, c.d_hid,
                                   c.bilm_layers, rng)
            widths = [c.d_emb] + [2 * c.d_hid] * c.bilm_layers
            self.projector = LayerProjector.build(self.params, "proj", widths, c.d_mix, rng)
            self.mixer = LayerMixer.build(self.params, "mixer", c.bilm_layers + 1)
            lm_width = c.pca_dim if c.pca_dim is not None else c.d_mix
            self.attn_lm = ContextualAttention.build(
                self.params, "attn_lm", lm_width, c.combiner_hidden,
                c.attn_heads, c.attn_hidden, rng)
            rep_width += c.attn_heads * lm_width

        self.rep_width = rep_width
        self.combiner = CombinationRnn.build(
            self.params, "comb", rep_width, num_labels, c.label_emb_width,
            c.combiner_hidden, rng)
        feat_width = c.combiner_hidden + (rep_width if c.include_rep_in_final else 0)
        self.head = ClassifierHead.build(self.params, "head", num_labels, feat_width, rng)

    # Encoding ---------------------------------------------------------------

    def _mixed_tokens(self, token_ids: list[int]) -> Tensor:
        stack = self.bilm.forward(token_ids)
        mixed = mix_layers(self.projector.project(stack), self.mixer)
        if self.config.pca_dim is not None:
            if "pca.components" not in self.buffers:
                raise DataError("pca_dim is set but no reduction has been fitted")
            comps = Tensor(self.buffers["pca.components"].T)  # (d_mix, pca_dim), frozen
            mean = Tensor(self.buffers["pca.mean"].reshape(1, -1))
            mixed = matmul(mixed - mean, comps)
        return mixed

    def encode_utterance(self, token_ids: list[int], g_prev_col: Tensor) -> Tensor:
        """Fixed-width (1, rep_width) sentence representation."""
        parts = []
        if self.gru is not None:
            rep = encode_sentence(self.embedding, self.gru, self.attn, token_ids, g_prev_col)
            parts.append(rep.R)
        if self.bilm is not None:
            mixed = self._mixed_tokens(token_ids)
            scores = attention_scores(self.attn_lm, mixed, g_prev_col)
            parts.append(attend(scores, mixed).R)
        return parts[0] if len(parts) == 1 else concat_cols(parts)

    def fit_pca_reduction(self, conversations: list[Conversation]) -> None:
        """Fit the optional frozen post-mixing reduction on current activations."""
        if self.config.pca_dim is None or self.bilm is None:
            return
        rows = []
        with no_grad():
            for conv in conversations:
                for u in conv.utterances:
                    stack = self.bilm.forward(self.vocab.encode(u.tokens))
                    mixed = mix_layers(self.projector.project(stack), self.mixer)
                    rows.append(mixed.value)
        samples = np.concatenate(rows, axis=0)
        projection = pca_fit(samples, self.config.pca_dim)
        self.buffers["pca.mean"] = projection.mean.reshape(1, -1)
        self.buffers["pca.components"] = projection.components.copy()

    # Training loss ------------------------------------------------------------

    def gold_label_ids(self, conv: Conversation) -> list[int]:
        ids = []
        for u in conv.utterances:
            if u.act_tag is None:
                raise DataError(f"conversation '{conv.id}' utterance {u.index} is unlabeled")
            ids.append(u.label_id if u.label_id is not None else self.taxonomy.id_of(u.act_tag))
        return ids

    def conversation_loss(self, conv: Conversation, train_rng: SeededRng) -> tuple[Tensor, int]:
        """Summed cross-entropy over one conversation, teacher-forced labels
        (unless the label feature is ablated), dropout on the classifier input."""
        gold = self.gold_label_ids(conv)
        seqs = [self.vocab.encode(u.tokens) for u in conv.utterances]
        mode = "gold" if self.config.label_mode == "gold" else "none"
        run = run_conversation(self.combiner, self.encode_utterance, seqs, mode,
                               gold_labels=gold if mode == "gold" else None,
                               include_rep=self.config.include_rep_in_final)
        logit_rows = []
        for final in run.finals:
            if self.config.dropout > 0.0:
                final = dropout(final, self.config.dropout, train_rng)
            logit_rows.append(self.head.logits(final))
        stacked = concat_rows(logit_rows)
        mean_ce = cross_entropy(stacked, gold)
        return scale(mean_ce, float(len(gold))), len(gold)

    # Inference ------------------------------------------------------------------

    def predict_conversation(self, conv: Conversation) -> list[Prediction]:
        """Sequential inference; the running predicted label (fallback included)
        feeds forward as the previous-label input unless ablated."""
        use_labels = self.config.label_mode == "gold"
        preds: list[Prediction] = []
        with no_grad():
            g = self.combiner.initial_state()
            prev: int | None = None
            for u in conv.utterances:
                rep = self.encode_utterance(self.vocab.encode(u.tokens), transpose(g))
                g, final = combine_step(self.combiner, g, rep,
                                        prev if use_labels else None,
                                        include_rep=self.config.include_rep_in_final)
                pred = predict_with_fallback(self.head, final.value, self.rules,
                                             u.tokens, self.config.fallback_threshold)
                preds.append(pred)
                prev = pred.label_id if use_labels else None
        return preds

    # Persistence helpers -----------------------------------------------------------

    def state_snapshot(self) -> dict[str, np.ndarray]:
        return self.params.state_dict()

    def restore_snapshot(self, snapshot: dict[str, np.ndarray]) -> None:
        self.params.load_state_dict(snapshot)


def build_model(config: ModelConfig, vocab: TokenVocab, taxonomy: Taxonomy,
                seed: int | SeededRng) -> DialogueModel:
    rng = seed if isinstance(seed, SeededRng) else SeededRng(seed)
    return DialogueModel(config, vocab, taxonomy, rng)
