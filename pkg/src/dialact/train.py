"""Training loop, evaluation, and the multi-seed protocol.

One run is fully determined by (config, corpus, seed): a single random
stream drives parameter init, per-epoch shuffling, and dropout masks, in
that order. Training sees only the train split plus an opaque validation
callback; the parameters kept are those of the best-validation epoch.

Every benchmark run is repeated over independent seeds (eight by default)
and reported as mean plus sample standard deviation.
"""

from __future__ import annotations

import concurrent.futures
import math
import os
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .classifier import Prediction, accuracy, confusion_matrix
from .config import ModelConfig
from .corpus import Conversation, DatasetSplit, Taxonomy, load_bundled_taxonomy, load_taxonomy
from .errors import DataError, NumericError
from .model import DialogueModel
from .optim import AdamW
from .rng import SeededRng
from .vocab import TokenVocab

# Published headline numbers, kept as reference metadata only: reproducing
# them needs the full licensed corpora and large pretrained encoders.
REFERENCE_RESULTS = {
    "swda_squad_accuracy": 83.1,
    "nltk_accuracy": 85.5,
    "status": "NOT-REPRODUCED",
}


def resolve_taxonomy(name_or_path: str) -> Taxonomy:
    if name_or_path in ("swda", "nltk"):
        return load_bundled_taxonomy(name_or_path)
    return load_taxonomy(name_or_path)


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray
    fallback_rate: float
    n_utterances: int
    predictions: list[list[Prediction]] = field(repr=False, default_factory=list)


def evaluate(model: DialogueModel, conversations: list[Conversation]) -> EvalResult:
    """Inference with running predicted labels; accuracy, confusion, fallback share."""
    if not conversations:
        raise DataError("nothing to evaluate")
    predicted: list[int] = []
    gold: list[int] = []
    fallbacks = 0
    all_preds: list[list[Prediction]] = []
    for conv in conversations:
        preds = model.predict_conversation(conv)
        all_preds.append(preds)
        for g, p in zip(model.gold_label_ids(conv), preds):
            predicted.append(p.label_id)
            gold.append(g)
            fallbacks += p.used_fallback
    return EvalResult(
        accuracy=accuracy(predicted, gold),
        confusion=confusion_matrix(predicted, gold, len(model.taxonomy)),
        fallback_rate=fallbacks / len(predicted),
        n_utterances=len(predicted),
        predictions=all_preds,
    )


@dataclass
class EpochRecord:
    epoch: int
    mean_train_loss: float
    validation_accuracy: float


@dataclass
class TrainResult:
    model: DialogueModel
    best_validation_accuracy: float
    history: list[EpochRecord]
    wall_clock_seconds: float


def train(config: ModelConfig, train_conversations: list[Conversation],
          validation_callback: Callable[[DialogueModel], float],
          seed: int) -> TrainResult:
    """Epoch loop over shuffled conversations with gradient accumulation per
    batch; aborts with diagnostics on a non-finite loss."""
    if not train_conversations:
        raise DataError("empty training split")
    started = time.perf_counter()
    rng = SeededRng(seed)
    taxonomy = resolve_taxonomy(config.taxonomy)
    vocab = TokenVocab.from_conversations(train_conversations)
    model = DialogueModel(config, vocab, taxonomy, rng)
    model.fit_pca_reduction(train_conversations)
    for conv in train_conversations:
        model.gold_label_ids(conv)  # unlabeled data is rejected up front

    optimizer = AdamW(model.params, lr=config.lr, beta1=config.adam_beta1,
                      beta2=config.adam_beta2, eps=config.adam_eps,
                      weight_decay=config.weight_decay)
    best_val = validation_callback(model)
    best_state = model.state_snapshot()
    history = [EpochRecord(epoch=0, mean_train_loss=math.nan,
                           validation_accuracy=best_val)]

    order = list(range(len(train_conversations)))
    for epoch in range(1, config.epochs + 1):
        rng.shuffle(order)
        epoch_loss = 0.0
        epoch_utts = 0
        for start in range(0, len(order), config.batch_conversations):
            batch = order[start:start + config.batch_conversations]
            model.params.zero_grad()
            batch_utts = 0
            for idx in batch:
                conv = train_conversations[idx]
                loss, n = model.conversation_loss(conv, rng)
                value = loss.item()
                if not math.isfinite(value):
                    raise NumericError(
                        f"non-finite loss at epoch {epoch}, conversation '{conv.id}'")
                loss.backward()
                batch_utts += n
                epoch_loss += value
                epoch_utts += n
            model.params.scale_grads(1.0 / batch_utts)
            optimizer.step()
        val = validation_callback(model)
        history.append(EpochRecord(epoch=epoch, mean_train_loss=epoch_loss / epoch_utts,
                                   validation_accuracy=val))
        if val > best_val:
            best_val = val
            best_state = model.state_snapshot()
    model.restore_snapshot(best_state)
    return TrainResult(model=model, best_validation_accuracy=best_val, history=history,
                       wall_clock_seconds=time.perf_counter() - started)


def validation_callback_for(validation: list[Conversation]) -> Callable[[DialogueModel], float]:
    return lambda model: evaluate(model, validation).accuracy


# Multi-seed protocol ---------------------------------------------------------


@dataclass
class SeedRow:
    seed: int
    validation_accuracy: float
    test_accuracy: float
    fallback_rate: float
    confusion: np.ndarray
    wall_clock_seconds: float


@dataclass
class RunReport:
    rows: list[SeedRow]
    mean_validation_accuracy: float
    mean_test_accuracy: float
    std_validation_accuracy: float | None
    std_test_accuracy: float | None
    reference: dict = field(default_factory=lambda: dict(REFERENCE_RESULTS))

    def to_dict(self) -> dict:
        return {
            "rows": [
                {
                    "seed": r.seed,
                    "validation_accuracy": r.validation_accuracy,
                    "test_accuracy": r.test_accuracy,
                    "fallback_rate": r.fallback_rate,
                    "confusion": r.confusion.tolist(),
                    "wall_clock_seconds": r.wall_clock_seconds,
                }
                for r in self.rows
            ],
            "mean_validation_accuracy": self.mean_validation_accuracy,
            "mean_test_accuracy": self.mean_test_accuracy,
            "std_validation_accuracy": self.std_validation_accuracy,
            "std_test_accuracy": self.std_test_accuracy,
            "reference": self.reference,
        }


def _mean(values: list[float]) -> float:
    return sum(values) / len(values)


def _sample_std(values: list[float]) -> float | None:
    if len(values) < 2:
        return None
    m = _mean(values)
    return math.sqrt(sum((v - m) ** 2 for v in values) / (len(values) - 1))


def _run_one_seed(config: ModelConfig, split: DatasetSplit, seed: int) -> SeedRow:
    started = time.perf_counter()
    result = train(config, split.train, validation_callback_for(split.validation), seed)
    val_eval = evaluate(result.model, split.validation)
    test_eval = evaluate(result.model, split.test)
    return SeedRow(
        seed=seed,
        validation_accuracy=val_eval.accuracy,
        test_accuracy=test_eval.accuracy,
        fallback_rate=test_eval.fallback_rate,
        confusion=test_eval.confusion,
        wall_clock_seconds=time.perf_counter() - started,
    )


def multi_seed_eval(config: ModelConfig, split: DatasetSplit,
                    seeds: Sequence[int] = tuple(range(8))) -> RunReport:
    """Independent train+evaluate per seed; DACT_THREADS>1 runs seeds in
    parallel (runs share nothing mutable)."""
    if not seeds:
        raise DataError("need at least one seed")
    workers = int(os.environ.get("DACT_THREADS", "1") or "1")
    if workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda s: _run_one_seed(config, split, s), seeds))
    else:
        rows = [_run_one_seed(config, split, s) for s in seeds]
    val_accs = [r.validation_accuracy for r in rows]
    test_accs = [r.test_accuracy for r in rows]
    return RunReport(
        rows=rows,
        mean_validation_accuracy=_mean(val_accs),
        mean_test_accuracy=_mean(test_accs),
        std_validation_accuracy=_sample_std(val_accs),
        std_test_accuracy=_sample_std(test_accs),
    )
