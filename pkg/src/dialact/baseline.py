"""Context-free bag-of-words logistic-regression baseline.

The learnability comparison needs a reference point that sees each sentence
in isolation: token counts into a linear softmax layer, trained full-batch
with the same optimizer the main model uses.
"""

from __future__ import annotations

import numpy as np

from .classifier import accuracy
from .corpus import Conversation, Taxonomy
from .errors import DataError
from .optim import AdamW
from .params import ParamStore
from .rng import SeededRng
from .tensor import Tensor, add, cross_entropy, matmul


class BowLogisticBaseline:
    def __init__(self, token_index: dict[str, int], W: np.ndarray, b: np.ndarray,
                 taxonomy: Taxonomy):
        self.token_index = token_index
        self.W = W
        self.b = b
        self.taxonomy = taxonomy

    def _features(self, tokens: list[str]) -> np.ndarray:
        x = np.zeros((1, len(self.token_index)))
        for t in tokens:
            idx = self.token_index.get(t)
            if idx is not None:
                x[0, idx] += 1.0
        return x

    def predict(self, tokens: list[str]) -> int:
        logits = self._features(tokens) @ self.W + self.b
        return int(np.argmax(logits))

    def accuracy(self, conversations: list[Conversation]) -> float:
        predicted, gold = [], []
        for conv in conversations:
            for u in conv.utterances:
                if u.act_tag is None:
                    raise DataError(f"unlabeled utterance in '{conv.id}'")
                predicted.append(self.predict(u.tokens))
                gold.append(self.taxonomy.id_of(u.act_tag))
        return accuracy(predicted, gold)


def train_bow_baseline(conversations: list[Conversation], taxonomy: Taxonomy,
                       seed: int = 0, steps: int = 300, lr: float = 0.1) -> BowLogisticBaseline:
    if not conversations:
        raise DataError("empty training corpus")
    token_index: dict[str, int] = {}
    rows, labels = [], []
    for conv in conversations:
        for u in conv.utterances:
            if u.act_tag is None:
                raise DataError(f"unlabeled utterance in '{conv.id}'")
            for t in u.tokens:
                token_index.setdefault(t, len(token_index))
            rows.append(u.tokens)
            labels.append(taxonomy.id_of(u.act_tag))
    X = np.zeros((len(rows), len(token_index)))
    for i, tokens in enumerate(rows):
        for t in tokens:
            X[i, token_index[t]] += 1.0

    store = ParamStore()
    rng = SeededRng(seed)
    bound = 1.0 / len(token_index) ** 0.5
    W = store.add("bow.W", rng.uniform_matrix(len(token_index), len(taxonomy), -bound, bound))
    b = store.add("bow.b", np.zeros((1, len(taxonomy))))
    features = Tensor(X)
    optimizer = AdamW(store, lr=lr)
    for _ in range(steps):
        store.zero_grad()
        loss = cross_entropy(add(matmul(features, W), b), labels)
        loss.backward()
        optimizer.step()
    return BowLogisticBaseline(token_index, W.value.copy(), b.value.copy(), taxonomy)
