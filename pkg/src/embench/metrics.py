"""Scalar evaluation metrics.

Values are kept in their natural range ([0, 1] or [-1, 1]); scaling by 100
happens only when a report is rendered.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Hashable, Mapping, Sequence

import numpy as np

from .errors import DegenerateInput, LengthMismatch, NoPositives, NoRelevantDocs, OneClassOnly


@dataclass(frozen=True, slots=True)
class MetricValue:
    name: str
    value: float

    @property
    def reported(self) -> float:
        return self.value * 100.0


def ndcg_at_k(ranking: Sequence[str], rels: Mapping[str, int], k: int = 10) -> float:
    """nDCG@k with linear gain ``rel / log2(rank + 1)``."""
    ideal = sorted((r for r in rels.values() if r > 0), reverse=True)
    if not ideal:
        raise NoRelevantDocs("no document has relevance >= 1")
    dcg = 0.0
    for i, doc in enumerate(ranking[:k], start=1):
        rel = rels.get(doc, 0)
        if rel > 0:
            dcg += rel / math.log2(i + 1)
    idcg = 0.0
    for i, rel in enumerate(ideal[:k], start=1):
        idcg += rel / math.log2(i + 1)
    return dcg / idcg


def recall_at_k(ranking: Sequence[str], rels: Mapping[str, int], k: int = 10) -> float:
    relevant = {d for d, r in rels.items() if r > 0}
    if not relevant:
        raise NoRelevantDocs("no document has relevance >= 1")
    return len(relevant.intersection(ranking[:k])) / len(relevant)


def mrr_at_k(ranking: Sequence[str], rels: Mapping[str, int], k: int = 10) -> float:
    for i, doc in enumerate(ranking[:k], start=1):
        if rels.get(doc, 0) > 0:
            return 1.0 / i
    return 0.0


def average_precision_ranked(labels: Sequence[int]) -> float:
    """AP of a ranked list of binary labels (first element is rank 1)."""
    total, hits = 0.0, 0
    for i, label in enumerate(labels, start=1):
        if label:
            hits += 1
            total += hits / i
    if hits == 0:
        raise NoPositives("ranking contains no positive label")
    return total / hits


def rank_average(x: Sequence[float]) -> np.ndarray:
    """1-based fractional ranks; tied values share the mean of their positions."""
    a = np.asarray(x, dtype=np.float64)
    order = np.argsort(a, kind="mergesort")
    ranks = np.empty(len(a), dtype=np.float64)
    sorted_a = a[order]
    i = 0
    while i < len(a):
        j = i
        while j + 1 < len(a) and sorted_a[j + 1] == sorted_a[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    if len(x) != len(y):
        raise LengthMismatch(f"{len(x)} != {len(y)}")
    if len(x) < 2:
        raise DegenerateInput("need at least two observations")
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(y, dtype=np.float64)
    da, db = a - a.mean(), b - b.mean()
    sa, sb = math.sqrt(float(da @ da)), math.sqrt(float(db @ db))
    if sa == 0.0 or sb == 0.0:
        raise DegenerateInput("constant input has no correlation")
    r = float(da @ db) / (sa * sb)
    return max(-1.0, min(1.0, r))


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    if len(x) != len(y):
        raise LengthMismatch(f"{len(x)} != {len(y)}")
    if len(x) < 2:
        raise DegenerateInput("need at least two observations")
    if len(set(x)) == 1 or len(set(y)) == 1:
        raise DegenerateInput("constant input has no rank correlation")
    return pearson(rank_average(x), rank_average(y))


def _entropy(counts) -> float:
    n = sum(counts)
    return -sum((c / n) * math.log(c / n) for c in counts if c)


def _conditional_entropy(joint: Counter, marginal: Counter, n: int) -> float:
    # H(A|B) where joint is keyed by (a, b) and marginal by b
    return -sum((c / n) * math.log(c / marginal[b]) for (_, b), c in joint.items())


def homogeneity_completeness(gold: Sequence[Hashable], pred: Sequence[Hashable]) -> tuple[float, float]:
    if len(gold) != len(pred):
        raise LengthMismatch(f"{len(gold)} != {len(pred)}")
    if not gold:
        raise LengthMismatch("v-measure needs at least one item")
    n = len(gold)
    classes, clusters = Counter(gold), Counter(pred)
    h_c, h_k = _entropy(classes.values()), _entropy(clusters.values())
    h_c_given_k = _conditional_entropy(Counter(zip(gold, pred)), clusters, n)
    h_k_given_c = _conditional_entropy(Counter(zip(pred, gold)), classes, n)
    h = 1.0 if h_c == 0.0 else 1.0 - h_c_given_k / h_c
    c = 1.0 if h_k == 0.0 else 1.0 - h_k_given_c / h_k
    return h, c


def v_measure(gold: Sequence[Hashable], pred: Sequence[Hashable]) -> float:
    h, c = homogeneity_completeness(gold, pred)
    if h + c == 0.0:
        return 0.0
    return 2.0 * h * c / (h + c)


def pair_f1(predicted, gold) -> dict[str, float]:
    predicted, gold = set(predicted), set(gold)
    tp = len(predicted & gold)
    precision = tp / len(predicted) if predicted else 0.0
    recall = tp / len(gold) if gold else 0.0
    f1 = 0.0 if precision + recall == 0.0 else 2 * precision * recall / (precision + recall)
    return {"precision": precision, "recall": recall, "f1": f1}


def ranked_labels(scores: Sequence[float], labels: Sequence[int]) -> list[int]:
    """Labels ordered by score descending, ties by ascending input position."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return [labels[i] for i in order]


def best_threshold_ap(sims: Sequence[float], labels: Sequence[int]) -> dict[str, float]:
    if len(sims) != len(labels):
        raise LengthMismatch(f"{len(sims)} != {len(labels)}")
    pos = sum(1 for y in labels if y)
    n = len(labels)
    if pos == 0 or pos == n:
        raise OneClassOnly("both classes are required")
    ap = average_precision_ranked(ranked_labels(sims, labels))

    # Sweep thresholds from -inf upward; predicting positive when sim > threshold.
    pairs = sorted(zip(sims, labels))
    distinct = sorted(set(sims))
    candidates = [-math.inf] + [(a + b) / 2.0 for a, b in zip(distinct, distinct[1:])] + [math.inf]
    correct = pos  # at -inf everything is predicted positive
    best_acc, best_t = correct / n, candidates[0]
    i = 0
    for t_index in range(1, len(candidates)):
        # one more distinct value falls below the threshold
        value = distinct[t_index - 1]
        while i < n and pairs[i][0] == value:
            correct += -1 if pairs[i][1] else 1
            i += 1
        acc = correct / n
        if acc > best_acc:
            best_acc, best_t = acc, candidates[t_index]
    return {"ap": ap, "best_accuracy": best_acc, "threshold": best_t}


def accuracy(pred: Sequence[Hashable], gold: Sequence[Hashable]) -> float:
    if len(pred) != len(gold):
        raise LengthMismatch(f"{len(pred)} != {len(gold)}")
    if not gold:
        raise DegenerateInput("accuracy of an empty list")
    return sum(1 for p, g in zip(pred, gold) if p == g) / len(gold)


def macro_f1(pred: Sequence[Hashable], gold: Sequence[Hashable]) -> float:
    if len(pred) != len(gold):
        raise LengthMismatch(f"{len(pred)} != {len(gold)}")
    labels = sorted(set(gold) | set(pred), key=str)
    scores = []
    for label in labels:
        tp = sum(1 for p, g in zip(pred, gold) if p == label and g == label)
        fp = sum(1 for p, g in zip(pred, gold) if p == label and g != label)
        fn = sum(1 for p, g in zip(pred, gold) if p != label and g == label)
        denom = 2 * tp + fp + fn
        scores.append(0.0 if denom == 0 else 2 * tp / denom)
    return sum(scores) / len(scores)


def macro_ovr_ap(class_scores: np.ndarray, gold_index: Sequence[int]) -> float:
    """Mean over classes present in ``gold_index`` of one-vs-rest AP."""
    class_scores = np.asarray(class_scores, dtype=np.float64)
    present = sorted(set(gold_index))
    aps = []
    for c in present:
        labels = [1 if g == c else 0 for g in gold_index]
        aps.append(average_precision_ranked(ranked_labels(class_scores[:, c].tolist(), labels)))
    return sum(aps) / len(aps)
