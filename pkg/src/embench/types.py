"""Domain types: vectors, task kinds, manifests and loaded task data."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence, Union

import numpy as np

from .errors import NaNVector, ValidationError


class EmbeddingVector:
    """A fixed-width float32 vector with its float64 Euclidean norm cached."""

    __slots__ = ("values", "norm")

    def __init__(self, values):
        with np.errstate(over="ignore"):
            # values beyond float32 range become inf and are rejected below
            arr = np.array(values, dtype=np.float32).reshape(-1)
        if arr.size == 0:
            raise ValueError("embedding must have dim >= 1")
        if not np.isfinite(arr).all():
            raise NaNVector("embedding contains NaN or infinity")
        arr.setflags(write=False)
        self.values = arr
        v64 = arr.astype(np.float64)
        self.norm = float(math.sqrt(float(np.dot(v64, v64))))

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    def as_float64(self) -> np.ndarray:
        return self.values.astype(np.float64)

    def __len__(self):
        return self.dim

    def __eq__(self, other):
        if not isinstance(other, EmbeddingVector):
            return NotImplemented
        return self.values.tobytes() == other.values.tobytes()

    def __hash__(self):
        return hash(self.values.tobytes())

    def __repr__(self):
        return f"EmbeddingVector(dim={self.dim}, norm={self.norm:.6g})"


class TaskKind(str, enum.Enum):
    RETRIEVAL = "retrieval"
    CROSSLINGUAL_RETRIEVAL = "crosslingual_retrieval"
    RERANKING = "reranking"
    STS = "sts"
    CLASSIFICATION = "classification"
    PAIR_CLASSIFICATION = "pair_classification"
    CLUSTERING = "clustering"
    BITEXT_MINING = "bitext"

    @classmethod
    def parse(cls, name: str) -> "TaskKind":
        if isinstance(name, TaskKind):
            return name
        key = str(name).strip().lower().replace("-", "_").replace(" ", "_")
        try:
            return _TASK_ALIASES[key]
        except KeyError:
            raise ValidationError(f"unknown task kind {name!r}") from None

    @property
    def abbrev(self) -> str:
        return TASK_ABBREVIATIONS[self]

    @property
    def default_metric(self) -> str:
        return DEFAULT_METRICS[self]


_TASK_ALIASES = {k.value: k for k in TaskKind}
_TASK_ALIASES.update({
    "rtr": TaskKind.RETRIEVAL,
    "crtr": TaskKind.CROSSLINGUAL_RETRIEVAL,
    "crosslingualretrieval": TaskKind.CROSSLINGUAL_RETRIEVAL,
    "cross_lingual_retrieval": TaskKind.CROSSLINGUAL_RETRIEVAL,
    "rrk": TaskKind.RERANKING,
    "clf": TaskKind.CLASSIFICATION,
    "pairclf": TaskKind.PAIR_CLASSIFICATION,
    "pairclassification": TaskKind.PAIR_CLASSIFICATION,
    "clr": TaskKind.CLUSTERING,
    "btm": TaskKind.BITEXT_MINING,
    "bitext_mining": TaskKind.BITEXT_MINING,
    "bitextmining": TaskKind.BITEXT_MINING,
})

# Leaderboard column order follows the published overall table.
TASK_ABBREVIATIONS = {
    TaskKind.RETRIEVAL: "RTR",
    TaskKind.CROSSLINGUAL_RETRIEVAL: "CRTR",
    TaskKind.STS: "STS",
    TaskKind.PAIR_CLASSIFICATION: "PairCLF",
    TaskKind.CLASSIFICATION: "CLF",
    TaskKind.RERANKING: "RRK",
    TaskKind.CLUSTERING: "CLR",
    TaskKind.BITEXT_MINING: "BTM",
}

DEFAULT_METRICS = {
    TaskKind.RETRIEVAL: "ndcg@10",
    TaskKind.CROSSLINGUAL_RETRIEVAL: "ndcg@10",
    TaskKind.RERANKING: "map",
    TaskKind.STS: "spearman",
    TaskKind.CLASSIFICATION: "ap",
    TaskKind.PAIR_CLASSIFICATION: "ap",
    TaskKind.CLUSTERING: "v_measure",
    TaskKind.BITEXT_MINING: "f1",
}

NEEDS_TARGET_LANGUAGE = frozenset({TaskKind.CROSSLINGUAL_RETRIEVAL, TaskKind.BITEXT_MINING})

REQUIRED_ROLES = {
    TaskKind.RETRIEVAL: ("corpus", "queries", "qrels"),
    TaskKind.CROSSLINGUAL_RETRIEVAL: ("corpus", "queries", "qrels"),
    TaskKind.RERANKING: ("records",),
    TaskKind.STS: ("pairs",),
    TaskKind.CLASSIFICATION: ("train", "test"),
    TaskKind.PAIR_CLASSIFICATION: ("pairs",),
    TaskKind.CLUSTERING: ("records",),
    TaskKind.BITEXT_MINING: ("pairs",),
}

KNOWN_ROLES = frozenset({"corpus", "queries", "qrels", "pairs", "records", "train", "test"})


@dataclass(frozen=True)
class DatasetManifest:
    id: str
    task: TaskKind
    language: str
    paths: Mapping[str, Path]
    metric: str
    target_language: str | None = None
    dialect: str | None = None
    instruction: str | None = None
    metric_override: bool = False
    score_range: tuple[float, float] = (0.0, 5.0)

    def to_dict(self) -> dict:
        out = {
            "id": self.id,
            "task": self.task.value,
            "language": self.language,
            "paths": {role: str(p) for role, p in sorted(self.paths.items())},
            "metric": self.metric,
        }
        for key in ("target_language", "dialect", "instruction"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        if self.metric_override:
            out["metric_override"] = True
        if self.task is TaskKind.STS:
            out["score_range"] = list(self.score_range)
        return out


class Qrels(dict):
    """Relevance judgments keyed by ``(query_id, doc_id)``."""

    def for_query(self, query_id: str) -> dict[str, int]:
        return {d: r for (q, d), r in self.items() if q == query_id}

    def by_query(self) -> dict[str, dict[str, int]]:
        out: dict[str, dict[str, int]] = {}
        for (q, d), r in self.items():
            out.setdefault(q, {})[d] = r
        return out


@dataclass(frozen=True)
class RetrievalData:
    documents: tuple[tuple[str, str], ...]
    queries: tuple[tuple[str, str], ...]
    qrels: Qrels
    task: TaskKind = TaskKind.RETRIEVAL

    @property
    def sizes(self) -> tuple[int, int, int]:
        return len(self.documents), len(self.queries), len(self.qrels)


@dataclass(frozen=True)
class RerankItem:
    query: str
    positives: tuple[str, ...]
    negatives: tuple[str, ...]


@dataclass(frozen=True)
class RerankingData:
    items: tuple[RerankItem, ...]
    task: TaskKind = TaskKind.RERANKING


@dataclass(frozen=True)
class STSData:
    pairs: tuple[tuple[str, str, float], ...]
    score_range: tuple[float, float] = (0.0, 5.0)
    task: TaskKind = TaskKind.STS


@dataclass(frozen=True)
class ClassificationData:
    train: tuple[tuple[str, str], ...]
    test: tuple[tuple[str, str], ...]
    task: TaskKind = TaskKind.CLASSIFICATION

    @property
    def labels(self) -> list[str]:
        return sorted({label for _, label in self.train})


@dataclass(frozen=True)
class PairClassificationData:
    pairs: tuple[tuple[str, str, int], ...]
    task: TaskKind = TaskKind.PAIR_CLASSIFICATION


@dataclass(frozen=True)
class ClusteringData:
    items: tuple[tuple[str, str], ...]
    task: TaskKind = TaskKind.CLUSTERING


@dataclass(frozen=True)
class BitextData:
    pairs: tuple[tuple[str, str], ...]
    task: TaskKind = TaskKind.BITEXT_MINING


TaskData = Union[
    RetrievalData,
    RerankingData,
    STSData,
    ClassificationData,
    PairClassificationData,
    ClusteringData,
    BitextData,
]


def as_vectors(values: Sequence) -> list[EmbeddingVector]:
    return [v if isinstance(v, EmbeddingVector) else EmbeddingVector(v) for v in values]
