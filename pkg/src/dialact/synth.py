"""Synthetic conversation generator.

A generation spec (JSON) names per-label utterance templates plus optional
cue->response pair rules. Pair rules create the context-ambiguous regime:
the response surface is drawn from a shared pool, and its gold label is a
function of the cue's label, so no classifier that ignores context can do
better than the largest per-surface label share. Generation counts those
shares so tests can verify the ceiling instead of assuming it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Conversation, Taxonomy, Utterance, data_path, load_bundled_taxonomy, tokenize
from .errors import DataError, TaxonomyError
from .rng import SeededRng


@dataclass
class PairRule:
    cue: str
    response_label: str


@dataclass
class SynthSpec:
    name: str
    taxonomy: str
    templates: dict[str, list[str]]
    standalone_weights: dict[str, float]
    pair_fraction: float = 0.0
    pairs: list[PairRule] = field(default_factory=list)
    cue_weights: list[float] = field(default_factory=list)
    ambiguous_surfaces: list[str] = field(default_factory=list)
    events_per_conversation: tuple[int, int] = (3, 8)

    @classmethod
    def from_dict(cls, obj: dict) -> "SynthSpec":
        try:
            spec = cls(
                name=obj.get("name", "synthetic"),
                taxonomy=obj.get("taxonomy", "swda"),
                templates={k: list(v) for k, v in obj["templates"].items()},
                standalone_weights=dict(obj["standalone_weights"]),
                pair_fraction=float(obj.get("pair_fraction", 0.0)),
                pairs=[PairRule(p["cue"], p["response_label"]) for p in obj.get("pairs", [])],
                cue_weights=[float(w) for w in obj.get("cue_weights", [])],
                ambiguous_surfaces=list(obj.get("ambiguous_surfaces", [])),
                events_per_conversation=tuple(obj.get("events_per_conversation", (3, 8))),
            )
        except (KeyError, TypeError) as e:
            raise DataError(f"invalid generation spec: {e}") from None
        spec.validate()
        return spec

    @classmethod
    def from_file(cls, path: str | Path) -> "SynthSpec":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def validate(self) -> None:
        taxonomy = load_bundled_taxonomy(self.taxonomy)
        for label in self.labels():
            if label not in taxonomy:
                raise TaxonomyError(f"generation spec uses unknown tag '{label}'")
        for label, templates in self.templates.items():
            if not templates:
                raise DataError(f"label '{label}' has no templates")
        if self.pairs:
            if not self.ambiguous_surfaces:
                raise DataError("pair rules require ambiguous_surfaces")
            if not self.cue_weights:
                self.cue_weights = [1.0] * len(self.pairs)
            if len(self.cue_weights) != len(self.pairs):
                raise DataError("cue_weights length must match pairs")
            for rule in self.pairs:
                if rule.cue not in self.templates:
                    raise DataError(f"pair cue '{rule.cue}' has no templates")
        lo, hi = self.events_per_conversation
        if not (1 <= lo <= hi):
            raise DataError(f"bad events_per_conversation range {self.events_per_conversation}")

    def labels(self) -> list[str]:
        out = list(self.templates)
        for rule in self.pairs:
            if rule.response_label not in out:
                out.append(rule.response_label)
        return out


@dataclass
class GenerationStats:
    """Counting-oracle output produced alongside the corpus."""

    total_utterances: int = 0
    label_counts: dict[str, int] = field(default_factory=dict)
    ambiguous_count: int = 0
    surface_label_counts: dict[str, dict[str, int]] = field(default_factory=dict)

    def record(self, label: str, surface: str | None) -> None:
        self.total_utterances += 1
        self.label_counts[label] = self.label_counts.get(label, 0) + 1
        if surface is not None:
            self.ambiguous_count += 1
            per = self.surface_label_counts.setdefault(surface, {})
            per[label] = per.get(label, 0) + 1

    def ambiguous_label_marginal(self) -> dict[str, float]:
        totals: dict[str, int] = {}
        for per in self.surface_label_counts.values():
            for label, n in per.items():
                totals[label] = totals.get(label, 0) + n
        return {label: n / self.ambiguous_count for label, n in totals.items()}

    def context_free_bayes_ceiling(self) -> float:
        """Best possible ambiguous-subset accuracy for any classifier that
        sees only the utterance itself: per surface, pick the majority label."""
        if self.ambiguous_count == 0:
            return 1.0
        best = sum(max(per.values()) for per in self.surface_label_counts.values())
        return best / self.ambiguous_count


def synth_generate(spec: SynthSpec, seed: int, num_utterances: int,
                   id_prefix: str = "synth") -> tuple[list[Conversation], GenerationStats]:
    """Deterministically generate conversations totalling `num_utterances`.

    Pair responses carry extra={"ambiguous": true} so evaluation can find
    the context-dependent subset after a round trip through JSONL.
    """
    if num_utterances < 1:
        raise DataError("num_utterances must be >= 1")
    rng = SeededRng(seed)
    stats = GenerationStats()
    conversations: list[Conversation] = []
    standalone_labels = list(spec.standalone_weights)
    standalone_weights = [spec.standalone_weights[k] for k in standalone_labels]
    lo, hi = spec.events_per_conversation

    def make_utterance(conv_utts: list[Utterance], text: str, label: str,
                       ambiguous: bool) -> None:
        speaker = "A" if len(conv_utts) % 2 == 0 else "B"
        extra = {"ambiguous": True} if ambiguous else {}
        conv_utts.append(Utterance(
            text=text, tokens=tokenize(text), speaker=speaker, act_tag=label,
            index=len(conv_utts), extra=extra,
        ))
        stats.record(label, text if ambiguous else None)

    total = 0
    while total < num_utterances:
        utts: list[Utterance] = []
        n_events = lo + rng.below(hi - lo + 1)
        for _ in range(n_events):
            if total + len(utts) >= num_utterances:
                break
            if spec.pairs and rng.uniform() < spec.pair_fraction:
                rule = rng.weighted_choice(spec.pairs, spec.cue_weights)
                make_utterance(utts, rng.choice(spec.templates[rule.cue]), rule.cue, False)
                if total + len(utts) < num_utterances:
                    make_utterance(utts, rng.choice(spec.ambiguous_surfaces),
                                   rule.response_label, True)
            else:
                label = rng.weighted_choice(standalone_labels, standalone_weights)
                make_utterance(utts, rng.choice(spec.templates[label]), label, False)
        if not utts:
            continue
        conversations.append(Conversation(id=f"{id_prefix}-{len(conversations):04d}", utterances=utts))
        total += len(utts)
    return conversations, stats


def load_bundled_spec(name: str) -> SynthSpec:
    """Shipped generation specs: "separable" and "ambiguous"."""
    if name not in ("separable", "ambiguous"):
        raise DataError(f"no bundled generation spec named '{name}'")
    return SynthSpec.from_file(data_path(f"synth_{name}.json"))
