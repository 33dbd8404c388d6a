"""Gradient-check harness: one small instance per trainable subsystem.

Each check builds a tiny randomly-initialized instance, defines a scalar
loss that touches every parameter, and compares analytic gradients against
the central finite-difference oracle. Recurrent instances scale their
initial parameters up and sum the loss over a few sequences: entries whose
gradients sit near the finite-difference noise floor (~|loss|*eps/h) would
otherwise fail the relative-error test for reasons that have nothing to do
with gradient correctness.
"""

from __future__ import annotations

from dataclasses import dataclass

from .attention import BiGru, ContextualAttention, encode_sentence
from .bilm import BiLm, LayerMixer, LayerProjector, LayerStack, bilm_forward, bilm_loss, init_matrix
from .classifier import ClassifierHead
from .combiner import CombinationRnn, run_conversation
from .gradcheck import GradCheckReport, grad_check
from .params import ParamStore
from .rng import SeededRng
from .tensor import Tensor, add, cross_entropy, mean_all, mul, no_grad

GRADCHECK_MODULES = ("bilm", "mixer", "bigru", "attention", "combiner", "classifier")
DEFAULT_SEEDS = tuple(range(10))
TOLERANCE = 1e-4


def _scale_params(store: ParamStore, factor: float) -> None:
    for _, p in store.items():
        p.value *= factor


def _random_sequences(seed: int, vocab: int, count: int, base_len: int = 4) -> list[list[int]]:
    rng = SeededRng(seed)
    return [[rng.below(vocab) for _ in range(base_len + rng.below(3))] for _ in range(count)]


def check_bilm(seed: int) -> GradCheckReport:
    store = ParamStore()
    bilm = BiLm.build(store, "bilm", 5, 3, 3, 2, SeededRng(seed))
    _scale_params(store, 2.0)
    seqs = _random_sequences(seed + 1000, 5, 3)

    def loss():
        out = None
        for s in seqs:
            term = bilm_loss(bilm, s)
            out = term if out is None else add(out, term)
        return out

    return grad_check(loss, store)


def check_mixer(seed: int) -> GradCheckReport:
    # frozen stack from a throwaway model; only projector + mixer are checked
    scratch = ParamStore()
    bilm = BiLm.build(scratch, "bilm", 5, 3, 3, 2, SeededRng(seed))
    with no_grad():
        raw = bilm_forward(bilm, _random_sequences(seed + 2000, 5, 1, base_len=5)[0])
    frozen = LayerStack([Tensor(layer.value) for layer in raw.layers])

    store = ParamStore()
    rng = SeededRng(seed + 1)
    projector = LayerProjector.build(store, "proj", frozen.widths(), 3, rng)
    mixer = LayerMixer.build(store, "mixer", frozen.num_layers)
    mixer.raw_weights.value[...] = rng.uniform_matrix(frozen.num_layers, 1, -1, 1)
    _scale_params(store, 2.0)

    def loss():
        from .bilm import mix_layers

        mixed = mix_layers(projector.project(frozen), mixer)
        return mean_all(mul(mixed, mixed))

    return grad_check(loss, store)


def check_bigru(seed: int) -> GradCheckReport:
    store = ParamStore()
    gru = BiGru.build(store, "gru", 3, 3, SeededRng(seed))
    _scale_params(store, 2.0)
    rng = SeededRng(seed + 3000)
    inputs = [Tensor(rng.uniform_matrix(4, 3, -1, 1)) for _ in range(3)]

    def loss():
        out = None
        for x in inputs:
            h = gru.encode(x)
            term = mean_all(mul(h, h))
            out = term if out is None else add(out, term)
        return out

    return grad_check(loss, store)


def _build_attention_encoder(seed: int, vocab: int = 6, d_emb: int = 3, u: int = 3,
                             heads: int = 2, d_a: int = 2, g: int = 3):
    store = ParamStore()
    rng = SeededRng(seed)
    embedding = init_matrix(store, "embed", vocab, d_emb, rng, fan_in=d_emb)
    gru = BiGru.build(store, "gru", d_emb, u, rng)
    att = ContextualAttention.build(store, "attn", 2 * u, g, heads, d_a, rng)
    return store, embedding, gru, att


def check_attention(seed: int) -> GradCheckReport:
    store, embedding, gru, att = _build_attention_encoder(seed)
    _scale_params(store, 2.0)
    seqs = _random_sequences(seed + 4000, 6, 3, base_len=3)
    rng = SeededRng(seed + 5000)
    contexts = [Tensor(rng.uniform_matrix(3, 1, -0.8, 0.8)) for _ in seqs]
    targets = [rng.below(3) for _ in seqs]

    def loss():
        out = None
        for ids, g_prev, y in zip(seqs, contexts, targets):
            rep = encode_sentence(embedding, gru, att, ids, g_prev)
            term = cross_entropy(rep.R, [y])
            out = term if out is None else add(out, term)
        return out

    return grad_check(loss, store)


def check_combiner(seed: int) -> GradCheckReport:
    """Full path: encoder -> combination GRU (with the state fed back into
    the attention scorer) -> classifier head, on a 3-utterance conversation."""
    num_labels = 3
    store, embedding, gru, att = _build_attention_encoder(seed)
    rep_width = att.heads * 2 * gru.hidden
    rnn = CombinationRnn.build(store, "comb", rep_width, num_labels, 2, 3, SeededRng(seed + 1))
    head = ClassifierHead.build(store, "head", num_labels, rnn.hidden + rep_width,
                                SeededRng(seed + 2))
    _scale_params(store, 2.0)
    seqs = _random_sequences(seed + 6000, 6, 3, base_len=3)
    rng = SeededRng(seed + 7000)
    golds = [rng.below(num_labels) for _ in seqs]

    def loss():
        run = run_conversation(
            rnn,
            lambda ids, g_prev: encode_sentence(embedding, gru, att, ids, g_prev).R,
            seqs, "gold", gold_labels=golds,
        )
        out = None
        for final, y in zip(run.finals, golds):
            term = cross_entropy(head.logits(final), [y])
            out = term if out is None else add(out, term)
        return out

    return grad_check(loss, store)


def check_classifier(seed: int) -> GradCheckReport:
    store = ParamStore()
    rng = SeededRng(seed)
    head = ClassifierHead.build(store, "head", 4, 6, rng)
    features = Tensor(rng.uniform_matrix(1, 6, -1, 1))
    target = rng.below(4)

    def loss():
        return cross_entropy(head.logits(features), [target])

    return grad_check(loss, store)


_CHECKS = {
    "bilm": check_bilm,
    "mixer": check_mixer,
    "bigru": check_bigru,
    "attention": check_attention,
    "combiner": check_combiner,
    "classifier": check_classifier,
}


@dataclass
class ModuleCheckResult:
    module: str
    max_rel_err: float
    seeds: int

    @property
    def passed(self) -> bool:
        return self.max_rel_err < TOLERANCE


def run_gradcheck(modules=GRADCHECK_MODULES, seeds=DEFAULT_SEEDS) -> list[ModuleCheckResult]:
    results = []
    for module in modules:
        check = _CHECKS[module]
        worst = 0.0
        for seed in seeds:
            worst = max(worst, check(seed).max_rel_err)
        results.append(ModuleCheckResult(module=module, max_rel_err=worst, seeds=len(seeds)))
    return results
