"""Conversation corpus model: tokenizer, taxonomy, JSONL format, splits.

The canonical corpus format is JSONL with one conversation per line:

    {"id": "...", "utterances": [{"speaker": "A", "text": "...", "act_tag": "st"}, ...]}

Unknown fields on either level are preserved verbatim across a
save/load round trip.
"""

from __future__ import annotations

import importlib.resources
import json
import os
import re
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError, ParseError, SizeError, TaxonomyError
from .rng import SeededRng

NONVERBAL_TOKEN = "<laughter>"

_BRACKETED = re.compile(r"\[[^\]]*\]")
_TRAILING_PUNCT = "?!.,"


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, detach trailing ?!., and collapse
    bracketed annotations like "[Laughter]" into one nonverbal token."""
    text = _BRACKETED.sub(f" {NONVERBAL_TOKEN} ", text)
    tokens: list[str] = []
    for chunk in text.lower().split():
        if chunk == NONVERBAL_TOKEN:
            tokens.append(chunk)
            continue
        trailing: list[str] = []
        while chunk and chunk[-1] in _TRAILING_PUNCT:
            trailing.append(chunk[-1])
            chunk = chunk[:-1]
        if chunk:
            tokens.append(chunk)
        tokens.extend(reversed(trailing))
    return tokens


# Types ---------------------------------------------------------------------


@dataclass
class Utterance:
    text: str
    tokens: list[str]
    speaker: str
    act_tag: str | None
    index: int
    label_id: int | None = field(default=None, compare=False)
    extra: dict = field(default_factory=dict)

    @property
    def length(self) -> int:
        return len(self.tokens)


@dataclass
class Conversation:
    id: str
    utterances: list[Utterance]
    extra: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.utterances)


@dataclass(frozen=True)
class TaxonomyEntry:
    tag: str
    name: str
    example: str
    count: int


class Taxonomy:
    """Ordered dialogue-act tag inventory; tag -> label id is list position."""

    def __init__(self, entries: list[TaxonomyEntry]):
        self.entries = list(entries)
        self._ids: dict[str, int] = {}
        for i, e in enumerate(self.entries):
            if e.tag in self._ids:
                raise TaxonomyError(f"duplicate tag '{e.tag}' in taxonomy")
            self._ids[e.tag] = i

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, tag: str) -> bool:
        return tag in self._ids

    def tags(self) -> list[str]:
        return [e.tag for e in self.entries]

    def id_of(self, tag: str) -> int:
        try:
            return self._ids[tag]
        except KeyError:
            raise TaxonomyError(f"unknown dialogue-act tag '{tag}'") from None

    def tag_of(self, label_id: int) -> str:
        return self.entries[label_id].tag

    def to_snapshot(self) -> list[list]:
        return [[e.tag, e.name, e.example, e.count] for e in self.entries]

    @classmethod
    def from_snapshot(cls, rows: list) -> "Taxonomy":
        return cls([TaxonomyEntry(r[0], r[1], r[2], int(r[3])) for r in rows])


def load_taxonomy(path: str | Path) -> Taxonomy:
    """Read a tag<TAB>name<TAB>example<TAB>count file."""
    entries = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ParseError(f"{path}:{lineno}: expected 4 tab-separated fields, got {len(parts)}")
            tag, name, example, count = parts
            try:
                n = int(count.replace(",", ""))
            except ValueError:
                raise ParseError(f"{path}:{lineno}: bad count '{count}'") from None
            entries.append(TaxonomyEntry(tag, name, example, n))
    return Taxonomy(entries)


def data_path(filename: str) -> Path:
    return Path(importlib.resources.files("dialact").joinpath("data", filename))


def load_bundled_taxonomy(name: str) -> Taxonomy:
    """Load one of the shipped taxonomies ("swda": 43 tags, "nltk": 15)."""
    if name not in ("swda", "nltk"):
        raise TaxonomyError(f"no bundled taxonomy named '{name}'")
    return load_taxonomy(data_path(f"{name}_taxonomy.tsv"))


# JSONL I/O -----------------------------------------------------------------

_CONV_KEYS = ("id", "utterances")
_UTT_KEYS = ("speaker", "text", "act_tag")


def _parse_utterance(obj: dict, index: int, where: str, taxonomy: Taxonomy | None) -> Utterance:
    if not isinstance(obj, dict) or "text" not in obj:
        raise ParseError(f"{where}: utterance {index} has no 'text' field")
    text = obj["text"]
    tokens = tokenize(text)
    if not tokens:
        raise ParseError(f"{where}: utterance {index} is empty after tokenization")
    act_tag = obj.get("act_tag")
    if act_tag is not None and not isinstance(act_tag, str):
        raise ParseError(f"{where}: utterance {index} has a non-string act_tag")
    label_id = None
    if act_tag is not None and taxonomy is not None:
        label_id = taxonomy.id_of(act_tag)
    extra = {k: v for k, v in obj.items() if k not in _UTT_KEYS}
    return Utterance(
        text=text,
        tokens=tokens,
        speaker=str(obj.get("speaker", "")),
        act_tag=act_tag,
        index=index,
        label_id=label_id,
        extra=extra,
    )


def load_jsonl(path: str | Path, taxonomy: Taxonomy | None = None) -> list[Conversation]:
    """Parse the canonical corpus format; tags validated when a taxonomy is given."""
    conversations = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"{where}: invalid JSON ({e.msg})") from None
            if not isinstance(obj, dict) or "id" not in obj or "utterances" not in obj:
                raise ParseError(f"{where}: conversation needs 'id' and 'utterances'")
            if not isinstance(obj["utterances"], list) or not obj["utterances"]:
                raise ParseError(f"{where}: 'utterances' must be a nonempty list")
            utterances = [
                _parse_utterance(u, i, where, taxonomy)
                for i, u in enumerate(obj["utterances"])
            ]
            extra = {k: v for k, v in obj.items() if k not in _CONV_KEYS}
            conversations.append(Conversation(id=str(obj["id"]), utterances=utterances, extra=extra))
    return conversations


def _utterance_record(u: Utterance) -> dict:
    rec = {"speaker": u.speaker, "text": u.text, "act_tag": u.act_tag}
    rec.update(u.extra)
    return rec


def atomic_write_text(path: str | Path, content: str) -> None:
    """Write via a sibling temp file and rename so readers never see partials."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_bytes(path: str | Path, content: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_jsonl(conversations: list[Conversation], path: str | Path) -> None:
    lines = []
    for conv in conversations:
        rec = {"id": conv.id, "utterances": [_utterance_record(u) for u in conv.utterances]}
        rec.update(conv.extra)
        lines.append(json.dumps(rec, ensure_ascii=False))
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


# Splits ----------------------------------------------------------------------


@dataclass
class DatasetSplit:
    train: list[Conversation]
    validation: list[Conversation]
    test: list[Conversation]


DEFAULT_SPLIT_RATIOS = (0.87, 0.10, 0.03)


def split_dataset(conversations: list[Conversation],
                  ratios: tuple[float, float, float] = DEFAULT_SPLIT_RATIOS,
                  seed: int = 0) -> DatasetSplit:
    """Shuffle and partition whole conversations by cumulative ratio."""
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise DataError(f"ratios must be three nonnegative numbers, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"ratios must sum to 1, got {sum(ratios)}")
    order = list(conversations)
    SeededRng(seed).shuffle(order)
    n = len(order)
    cut1 = round(n * ratios[0])
    cut2 = round(n * (ratios[0] + ratios[1]))
    split = DatasetSplit(train=order[:cut1], validation=order[cut1:cut2], test=order[cut2:])
    if not (split.train and split.validation and split.test):
        raise SizeError(
            f"{n} conversations with ratios {ratios} leave an empty split "
            f"({len(split.train)}/{len(split.validation)}/{len(split.test)})"
        )
    return split


# Stats -----------------------------------------------------------------------

SWDA_QUESTION_TAGS = frozenset({"qw", "yn", "tg", "dynd", "dw", "sb", "q", "oo", "rh", "sn", "or", "co"})
NLTK_QUESTION_TAGS = frozenset({"whQuestion", "ynQuestion", "Statement-Question"})


def default_question_tags(taxonomy: Taxonomy) -> frozenset:
    tags = set(taxonomy.tags())
    if NLTK_QUESTION_TAGS & tags:
        return frozenset(NLTK_QUESTION_TAGS & tags)
    return frozenset(SWDA_QUESTION_TAGS & tags)


@dataclass
class CorpusStats:
    sentence_count: int
    histogram: dict[str, int]
    question_fraction: float


def corpus_stats(conversations: list[Conversation], taxonomy: Taxonomy,
                 question_tags: frozenset | None = None) -> CorpusStats:
    """Per-tag counts over a fully labeled corpus plus the question-type share."""
    if question_tags is None:
        question_tags = default_question_tags(taxonomy)
    histogram = {tag: 0 for tag in taxonomy.tags()}
    total = 0
    questions = 0
    for conv in conversations:
        for u in conv.utterances:
            if u.act_tag is None:
                raise DataError(f"conversation '{conv.id}' utterance {u.index} is unlabeled")
            if u.act_tag not in histogram:
                raise TaxonomyError(f"unknown dialogue-act tag '{u.act_tag}'")
            histogram[u.act_tag] += 1
            total += 1
            if u.act_tag in question_tags:
                questions += 1
    if total == 0:
        raise DataError("empty corpus")
    return CorpusStats(sentence_count=total, histogram=histogram,
                       question_fraction=questions / total)
