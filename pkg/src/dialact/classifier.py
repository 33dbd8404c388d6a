"""Softmax head, confidence-gated rule fallback, and evaluation metrics.

A prediction below the confidence threshold is rerouted to a rule
classifier that looks only at the sentence's surface structure: closed-class
POS tags drive five ordered first-match rules (tag fragment, wh-initial,
auxiliary inversion, bare question mark, declarative), and the winning
coarse type maps onto a tag of the active taxonomy. The neural distribution
is kept on the prediction either way.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bilm import init_matrix, init_zeros
from .corpus import Taxonomy, data_path
from .errors import DataError, ParseError, ShapeError
from .params import ParamStore
from .rng import SeededRng
from .tensor import Tensor, add, matmul, softmax_rows_np, transpose

COARSE_TYPES = ("WH_QUESTION", "YESNO_QUESTION", "TAG_QUESTION", "DECLARATIVE", "OTHER")

DEFAULT_POS_TAG = "NOUN"

TAG_FRAGMENT_WORDS = frozenset({
    "right", "okay", "ok", "huh", "yeah", "correct", "eh", "no", "yes",
    "really", "alright",
})


# Neural head ----------------------------------------------------------------


class ClassifierHead:
    """W (num_labels x feat_width) and bias; logits = F @ W^T + b."""

    def __init__(self, W: Tensor, b: Tensor, num_labels: int, feat_width: int):
        self.W = W
        self.b = b
        self.num_labels = num_labels
        self.feat_width = feat_width

    @classmethod
    def build(cls, store: ParamStore, prefix: str, num_labels: int, feat_width: int,
              rng: SeededRng) -> "ClassifierHead":
        W = init_matrix(store, f"{prefix}.W", num_labels, feat_width, rng, fan_in=feat_width)
        b = init_zeros(store, f"{prefix}.b", 1, num_labels)
        return cls(W, b, num_labels, feat_width)

    def logits(self, final: Tensor) -> Tensor:
        if final.shape != (1, self.feat_width):
            raise ShapeError(f"final representation {final.shape}, head expects (1, {self.feat_width})")
        return add(matmul(final, transpose(self.W)), self.b)


@dataclass
class Prediction:
    label_id: int
    confidence: float          # max neural softmax probability
    distribution: np.ndarray   # neural distribution, kept even on fallback
    used_fallback: bool = False
    coarse_type: str | None = None


def classify(head: ClassifierHead, final_values: np.ndarray) -> Prediction:
    """Argmax of the softmax distribution; ties break to the lowest id."""
    f = np.asarray(final_values, dtype=np.float64).reshape(1, -1)
    if f.shape[1] != head.feat_width:
        raise ShapeError(f"feature width {f.shape[1]}, head expects {head.feat_width}")
    logits = f @ head.W.value.T + head.b.value
    dist = softmax_rows_np(logits)[0]
    label = int(np.argmax(dist))
    return Prediction(label_id=label, confidence=float(dist[label]), distribution=dist)


# Rule fallback ----------------------------------------------------------------


def load_pos_lexicon(path: str | Path | None = None) -> dict[str, str]:
    path = data_path("pos_lexicon.tsv") if path is None else Path(path)
    lexicon: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(f"{path}:{lineno}: expected token<TAB>TAG")
            lexicon[parts[0]] = parts[1]
    return lexicon


def pos_tag(lexicon: dict[str, str], tokens: list[str]) -> list[str]:
    """Closed-class lookup; unknown tokens default to NOUN; a sentence-final
    '?' or '.' is always PUNCT."""
    tags = [lexicon.get(tok, DEFAULT_POS_TAG) for tok in tokens]
    if tokens and tokens[-1] in ("?", "."):
        tags[-1] = "PUNCT"
    return tags


def _skip_leading(tags: list[str]) -> int:
    i = 0
    while i < len(tags) and tags[i] in ("INTJ", "PUNCT"):
        i += 1
    return i


def _rule_tag_fragment(tokens: list[str], tags: list[str]) -> bool:
    if not tokens or tokens[-1] != "?":
        return False
    content = [tok for tok, tag in zip(tokens, tags) if tag != "PUNCT"]
    if not content or content[-1] not in TAG_FRAGMENT_WORDS:
        return False
    if len(content) <= 2:
        return True
    # trailing fragment set off by a comma: "... , right ?"
    return len(tokens) >= 3 and tokens[-2] == content[-1] and tokens[-3] == ","


def _rule_wh_initial(tokens: list[str], tags: list[str]) -> bool:
    i = _skip_leading(tags)
    return i < len(tags) and tags[i] == "WH"


def _rule_aux_inversion(tokens: list[str], tags: list[str]) -> bool:
    i = _skip_leading(tags)
    if i >= len(tags) or tags[i] != "AUX":
        return False
    return any(tag in ("PRON", "NOUN") for tag in tags[i + 1:])


def _rule_question_mark(tokens: list[str], tags: list[str]) -> bool:
    return bool(tokens) and tokens[-1] == "?"


def _rule_default(tokens: list[str], tags: list[str]) -> bool:
    return True


_RULE_PREDICATES = {
    "tag_fragment": _rule_tag_fragment,
    "wh_initial": _rule_wh_initial,
    "aux_inversion": _rule_aux_inversion,
    "question_mark": _rule_question_mark,
    "default": _rule_default,
}


@dataclass
class FallbackRuleSet:
    lexicon: dict[str, str]
    rules: list[tuple[str, str]]            # (predicate name, coarse type), file order
    coarse_to_label: dict[str, int] = field(default_factory=dict)

    @classmethod
    def load(cls, taxonomy: Taxonomy,
             lexicon_path: str | Path | None = None,
             rules_path: str | Path | None = None,
             map_path: str | Path | None = None) -> "FallbackRuleSet":
        lexicon = load_pos_lexicon(lexicon_path)
        rules_path = data_path("fallback_rules.tsv") if rules_path is None else Path(rules_path)
        rules: list[tuple[str, str]] = []
        with open(rules_path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise ParseError(f"{rules_path}:{lineno}: expected rule<TAB>COARSE")
                name, coarse = parts
                if name not in _RULE_PREDICATES:
                    raise DataError(f"{rules_path}:{lineno}: unknown rule '{name}'")
                if coarse not in COARSE_TYPES:
                    raise DataError(f"{rules_path}:{lineno}: unknown coarse type '{coarse}'")
                rules.append((name, coarse))
        if map_path is None:
            flavor = "swda" if "qw" in taxonomy else "nltk"
            map_path = data_path(f"coarse_map_{flavor}.tsv")
        coarse_to_label: dict[str, int] = {}
        with open(map_path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise ParseError(f"{map_path}:{lineno}: expected COARSE<TAB>tag")
                coarse_to_label[parts[0]] = taxonomy.id_of(parts[1])
        missing = {coarse for _, coarse in rules} - set(coarse_to_label)
        if missing:
            raise DataError(f"coarse types without a taxonomy mapping: {sorted(missing)}")
        return cls(lexicon=lexicon, rules=rules, coarse_to_label=coarse_to_label)

    def classify_tokens(self, tokens: list[str]) -> tuple[str, int]:
        """(coarse type, mapped label id) for one token sequence."""
        tags = pos_tag(self.lexicon, tokens)
        for name, coarse in self.rules:
            if _RULE_PREDICATES[name](tokens, tags):
                return coarse, self.coarse_to_label[coarse]
        # the bundled rule file ends with an always-true default
        raise DataError("rule set has no matching rule; add a 'default' rule")


def rule_classify(rules: FallbackRuleSet, tokens: list[str],
                  tags: list[str] | None = None) -> str:
    """Coarse sentence type by first matching rule; total and deterministic."""
    if tags is None:
        tags = pos_tag(rules.lexicon, tokens)
    for name, coarse in rules.rules:
        if _RULE_PREDICATES[name](tokens, tags):
            return coarse
    raise DataError("rule set has no matching rule; add a 'default' rule")


def predict_with_fallback(head: ClassifierHead, final_values: np.ndarray,
                          rules: FallbackRuleSet, raw_tokens: list[str],
                          threshold: float) -> Prediction:
    """Neural prediction when confidence >= threshold (inclusive), else the
    rule route with the neural distribution retained."""
    if not 0.0 <= threshold <= 1.0:
        raise DataError(f"fallback threshold {threshold} outside [0, 1]")
    pred = classify(head, final_values)
    if pred.confidence >= threshold:
        return pred
    coarse, label = rules.classify_tokens(raw_tokens)
    return Prediction(label_id=label, confidence=pred.confidence,
                      distribution=pred.distribution, used_fallback=True,
                      coarse_type=coarse)


# Metrics ----------------------------------------------------------------------


def accuracy(predictions: list[int], gold: list[int]) -> float:
    if not predictions or len(predictions) != len(gold):
        raise DataError(f"cannot score {len(predictions)} predictions against {len(gold)} gold labels")
    return sum(p == g for p, g in zip(predictions, gold)) / len(predictions)


def confusion_matrix(predictions: list[int], gold: list[int], num_labels: int) -> np.ndarray:
    """Counts with gold on rows, predictions on columns."""
    if not predictions or len(predictions) != len(gold):
        raise DataError(f"cannot score {len(predictions)} predictions against {len(gold)} gold labels")
    out = np.zeros((num_labels, num_labels), dtype=np.int64)
    for p, g in zip(predictions, gold):
        out[g, p] += 1
    return out
