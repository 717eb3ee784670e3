"""Multinomial logistic-regression probe trained by full-batch gradient descent."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import SingleClass
from ..types import EmbeddingVector

LR_START = 0.5
LR_END = 0.01


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def learning_rate(step: int, epochs: int) -> float:
    """Cosine decay from LR_START at step 0 towards LR_END."""
    return LR_END + (LR_START - LR_END) * 0.5 * (1.0 + math.cos(math.pi * step / epochs))


@dataclass
class ClassifierModel:
    classes: list[str]
    weights: np.ndarray  # (dim, n_classes)
    bias: np.ndarray  # (n_classes,)
    seed: int = 0

    def predict_proba(self, X) -> np.ndarray:
        return softmax(np.asarray(X, dtype=np.float64) @ self.weights + self.bias)

    def predict(self, X) -> list[str]:
        return [self.classes[i] for i in np.argmax(self.predict_proba(X), axis=1)]


def stack(vectors: Sequence[EmbeddingVector]) -> np.ndarray:
    return np.stack([v.values for v in vectors]).astype(np.float64)


def train_linear_classifier(
    train_vecs: Sequence[tuple[EmbeddingVector, str]],
    l2: float = 1e-4,
    epochs: int = 500,
    seed: int = 0,
) -> ClassifierModel:
    """Fit softmax cross-entropy plus ``l2/2 * ||W||^2`` from zero weights.

    Full-batch descent from a zero start has no random component; ``seed`` is
    carried on the model so results can be traced to a run.
    """
    labels = [label for _, label in train_vecs]
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise SingleClass("a classifier needs at least two classes")
    X = stack([v for v, _ in train_vecs])
    n, dim = X.shape
    index = {c: i for i, c in enumerate(classes)}
    Y = np.zeros((n, len(classes)))
    Y[np.arange(n), [index[y] for y in labels]] = 1.0
    W = np.zeros((dim, len(classes)))
    b = np.zeros(len(classes))
    for step in range(epochs):
        lr = learning_rate(step, epochs)
        G = (softmax(X @ W + b) - Y) / n
        W -= lr * (X.T @ G + l2 * W)
        b -= lr * G.sum(axis=0)
    return ClassifierModel(classes, W, b, seed)
