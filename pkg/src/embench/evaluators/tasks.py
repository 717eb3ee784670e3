"""One evaluator per task family.

Each evaluator embeds its inputs through the backend, scores them with the
vector engine and reduces per-item metrics in dataset order.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from .. import metrics as M
from ..backend.ledger import UsageLedger
from ..errors import EmptyDataset, EmptySide, ItemWithoutPositive, ValidationError
from ..prompts import fill_options
from ..types import (
    BitextData,
    ClassificationData,
    ClusteringData,
    EmbeddingVector,
    PairClassificationData,
    RerankingData,
    RetrievalData,
    STSData,
    TaskKind,
)
from ..vectors import EmbeddedCorpus, cosine, similarity_matrix, top_k_many
from .kmeans import kmeans
from .probe import stack, train_linear_classifier

RETRIEVAL_K = 10
CLUSTER_SEEDS = 5


class Embedder(Protocol):
    def embed_texts(self, texts: Sequence[str], instruction: str | None = None) -> list[EmbeddingVector]: ...


@dataclass
class EvalResult:
    dataset_id: str
    task: TaskKind
    main_score: M.MetricValue
    auxiliary: dict[str, float] = field(default_factory=dict)
    ledger_snapshot: UsageLedger | None = None
    seed: int = 0
    wall_clock_s: float = 0.0
    backend_id: str = ""
    language: str | None = None
    target_language: str | None = None

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "backend_id": self.backend_id,
            "task": self.task.value,
            "main_score": {"name": self.main_score.name, "value": self.main_score.value},
            "auxiliary": {k: _json_float(v) for k, v in sorted(self.auxiliary.items())},
            "ledger": self.ledger_snapshot.to_dict() if self.ledger_snapshot else None,
            "seed": self.seed,
            "wall_clock_s": self.wall_clock_s,
            "language": self.language,
            "target_language": self.target_language,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalResult":
        return cls(
            dataset_id=d["dataset_id"],
            backend_id=d.get("backend_id", ""),
            task=TaskKind.parse(d["task"]),
            main_score=M.MetricValue(d["main_score"]["name"], float(d["main_score"]["value"])),
            auxiliary={k: float(v) for k, v in d.get("auxiliary", {}).items()},
            ledger_snapshot=UsageLedger.from_dict(d["ledger"]) if d.get("ledger") else None,
            seed=int(d.get("seed", 0)),
            wall_clock_s=float(d.get("wall_clock_s", 0.0)),
            language=d.get("language"),
            target_language=d.get("target_language"),
        )


def _json_float(v: float):
    # strict JSON has no infinity; a +/-inf threshold sentinel round-trips as a string
    if math.isfinite(v):
        return v
    return "inf" if v > 0 else "-inf"


def _mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values)


class _Run:
    """Collects timing and ledger deltas around one evaluation."""

    def __init__(self, backend, clock: Callable[[], float]):
        self.backend = backend
        self.clock = clock
        ledger = getattr(backend, "ledger", None)
        self.before = ledger.snapshot() if ledger is not None else None
        self.start = clock()

    def result(self, task, metrics: dict, main: str | None, *, dataset_id, seed, extra=None) -> EvalResult:
        main = main or task.default_metric
        if main not in metrics:
            raise ValidationError(f"metric {main!r} is not produced by {task.value} evaluation")
        aux = {k: float(v) for k, v in metrics.items() if k != main}
        aux.update({k: float(v) for k, v in (extra or {}).items()})
        ledger = getattr(self.backend, "ledger", None)
        return EvalResult(
            dataset_id=dataset_id,
            task=task,
            main_score=M.MetricValue(main, float(metrics[main])),
            auxiliary=aux,
            ledger_snapshot=ledger.since(self.before) if ledger is not None else None,
            seed=seed,
            wall_clock_s=self.clock() - self.start,
        )


# --- retrieval family -----------------------------------------------------------

def eval_retrieval(
    data: RetrievalData,
    backend: Embedder,
    instruction: str | None = None,
    *,
    dataset_id: str = "",
    metric: str | None = None,
    seed: int = 0,
    workers: int = 1,
    clock: Callable[[], float] = time.perf_counter,
    **_,
) -> EvalResult:
    if not data.documents or not data.queries:
        raise EmptyDataset("retrieval needs a nonempty corpus and query set")
    run = _Run(backend, clock)
    judged = data.qrels.by_query()
    scored = [(qid, text) for qid, text in data.queries if max(judged.get(qid, {0: 0}).values()) >= 1]
    skipped = len(data.queries) - len(scored)
    if not scored:
        raise EmptyDataset("no query has a relevant document")
    # documents are always embedded without an instruction
    doc_vecs = backend.embed_texts([t for _, t in data.documents])
    corpus = EmbeddedCorpus.from_vectors(zip((d for d, _ in data.documents), doc_vecs))
    query_vecs = backend.embed_texts([t for _, t in scored], instruction)
    hits = top_k_many(query_vecs, corpus, RETRIEVAL_K, workers=workers)
    ndcg, recall, mrr = [], [], []
    for (qid, _), ranked in zip(scored, hits):
        ranking = [h.doc_id for h in ranked]
        rels = judged[qid]
        ndcg.append(M.ndcg_at_k(ranking, rels, RETRIEVAL_K))
        recall.append(M.recall_at_k(ranking, rels, RETRIEVAL_K))
        mrr.append(M.mrr_at_k(ranking, rels, RETRIEVAL_K))
    metrics = {"ndcg@10": _mean(ndcg), "recall@10": _mean(recall), "mrr@10": _mean(mrr)}
    return run.result(
        data.task, metrics, metric, dataset_id=dataset_id, seed=seed,
        extra={"skipped_queries": skipped, "evaluated_queries": len(scored)},
    )


def eval_crosslingual_retrieval(data: RetrievalData, backend: Embedder, instruction: str | None = None, **kw) -> EvalResult:
    # same machinery; the caller substitutes the target language into the instruction
    return eval_retrieval(data, backend, instruction, **kw)


def eval_reranking(
    data: RerankingData,
    backend: Embedder,
    instruction: str | None = None,
    *,
    dataset_id: str = "",
    metric: str | None = None,
    seed: int = 0,
    clock: Callable[[], float] = time.perf_counter,
    **_,
) -> EvalResult:
    if not data.items:
        raise EmptyDataset("reranking needs at least one item")
    for item in data.items:
        if not item.positives and not item.negatives:
            raise ValidationError("reranking item has no candidates")
        if not item.positives:
            raise ItemWithoutPositive("reranking item has no positive candidate")
    run = _Run(backend, clock)
    query_vecs = backend.embed_texts([it.query for it in data.items], instruction)
    candidates = [c for it in data.items for c in (*it.positives, *it.negatives)]
    cand_vecs = backend.embed_texts(candidates)
    aps, rrs, pos = [], [], 0
    for item, qv in zip(data.items, query_vecs):
        n = len(item.positives) + len(item.negatives)
        vecs = cand_vecs[pos:pos + n]
        pos += n
        sims = [cosine(qv, v) for v in vecs]
        labels = [1] * len(item.positives) + [0] * len(item.negatives)
        ranked = M.ranked_labels(sims, labels)
        aps.append(M.average_precision_ranked(ranked))
        rrs.append(1.0 / (ranked.index(1) + 1))
    metrics = {"map": _mean(aps), "mrr": _mean(rrs)}
    return run.result(TaskKind.RERANKING, metrics, metric, dataset_id=dataset_id, seed=seed)


# --- sentence-pair tasks ------------------------------------------------------------

def _pair_cosines(backend: Embedder, left, right, instruction) -> list[float]:
    a = backend.embed_texts(left, instruction)
    b = backend.embed_texts(right, instruction)
    return [cosine(x, y) for x, y in zip(a, b)]


def eval_sts(
    data: STSData,
    backend: Embedder,
    instruction: str | None = None,
    *,
    dataset_id: str = "",
    metric: str | None = None,
    seed: int = 0,
    clock: Callable[[], float] = time.perf_counter,
    **_,
) -> EvalResult:
    if not data.pairs:
        raise EmptyDataset("STS needs at least one pair")
    run = _Run(backend, clock)
    gold = [g for _, _, g in data.pairs]
    if len(set(gold)) == 1:
        raise M.DegenerateInput("gold scores are constant")
    sims = _pair_cosines(backend, [a for a, _, _ in data.pairs], [b for _, b, _ in data.pairs], instruction)
    metrics = {"spearman": M.spearman(sims, gold), "pearson": M.pearson(sims, gold)}
    return run.result(TaskKind.STS, metrics, metric, dataset_id=dataset_id, seed=seed)


def eval_pair_classification(
    data: PairClassificationData,
    backend: Embedder,
    instruction: str | None = None,
    *,
    dataset_id: str = "",
    metric: str | None = None,
    seed: int = 0,
    clock: Callable[[], float] = time.perf_counter,
    **_,
) -> EvalResult:
    labels = [y for _, _, y in data.pairs]
    if len(set(labels)) < 2:
        raise M.OneClassOnly("pair classification needs both labels")
    run = _Run(backend, clock)
    sims = _pair_cosines(backend, [a for a, _, _ in data.pairs], [b for _, b, _ in data.pairs], instruction)
    best = M.best_threshold_ap(sims, labels)
    metrics = {"ap": best["ap"], "accuracy": best["best_accuracy"]}
    return run.result(
        TaskKind.PAIR_CLASSIFICATION, metrics, metric, dataset_id=dataset_id, seed=seed,
        extra={"threshold": best["threshold"]},
    )


# --- classification and clustering --------------------------------------------------

def eval_classification(
    data: ClassificationData,
    backend: Embedder,
    instruction: str | None = None,
    *,
    dataset_id: str = "",
    metric: str | None = None,
    seed: int = 0,
    l2: float = 1e-4,
    epochs: int = 500,
    clock: Callable[[], float] = time.perf_counter,
    **_,
) -> EvalResult:
    run = _Run(backend, clock)
    classes = data.labels
    if instruction:
        instruction = fill_options(instruction, classes)
    train_vecs = backend.embed_texts([t for t, _ in data.train], instruction)
    test_vecs = backend.embed_texts([t for t, _ in data.test], instruction)
    model = train_linear_classifier(list(zip(train_vecs, (y for _, y in data.train))), l2, epochs, seed)
    X = stack(test_vecs)
    proba = model.predict_proba(X)
    gold = [y for _, y in data.test]
    index = {c: i for i, c in enumerate(model.classes)}
    pred = [model.classes[i] for i in np.argmax(proba, axis=1)]
    metrics = {
        "ap": M.macro_ovr_ap(proba, [index[y] for y in gold]),
        "accuracy": M.accuracy(pred, gold),
        "macro_f1": M.macro_f1(pred, gold),
    }
    return run.result(TaskKind.CLASSIFICATION, metrics, metric, dataset_id=dataset_id, seed=seed)


def eval_clustering(
    data: ClusteringData,
    backend: Embedder,
    instruction: str | None = None,
    *,
    dataset_id: str = "",
    metric: str | None = None,
    seed: int = 0,
    clock: Callable[[], float] = time.perf_counter,
    **_,
) -> EvalResult:
    if not data.items:
        raise EmptyDataset("clustering needs at least one item")
    gold = [label for _, label in data.items]
    k = len(set(gold))
    run = _Run(backend, clock)
    X = stack(backend.embed_texts([t for t, _ in data.items], instruction))
    scores = []
    for s in range(seed, seed + CLUSTER_SEEDS):
        labels, _ = kmeans(X, k, s)
        scores.append(M.v_measure(gold, labels.tolist()))
    metrics = {"v_measure": _mean(scores)}
    extra = {"n_clusters": k, "degenerate": 1.0 if k == 1 else 0.0}
    extra.update({f"v_measure_seed{s}": v for s, v in zip(range(seed, seed + CLUSTER_SEEDS), scores)})
    return run.result(TaskKind.CLUSTERING, metrics, metric, dataset_id=dataset_id, seed=seed, extra=extra)


# --- bitext mining --------------------------------------------------------------------

def mine_pairs(sources: Sequence[EmbeddingVector], targets: Sequence[EmbeddingVector], both_directions: bool = False):
    """Nearest target per source (ties to the lowest index), optionally unioned with the reverse."""
    sims = similarity_matrix(sources, targets)
    pairs = {(i, int(j)) for i, j in enumerate(np.argmax(sims, axis=1))}
    if both_directions:
        pairs |= {(int(i), j) for j, i in enumerate(np.argmax(sims, axis=0))}
    return pairs


def eval_bitext(
    data: BitextData,
    backend: Embedder,
    instruction: str | None = None,
    *,
    dataset_id: str = "",
    metric: str | None = None,
    seed: int = 0,
    both_directions: bool = False,
    clock: Callable[[], float] = time.perf_counter,
    **_,
) -> EvalResult:
    sources = [s for s, _ in data.pairs]
    targets = [t for _, t in data.pairs]
    if not sources or all(not s.strip() for s in sources):
        raise EmptySide("source side is empty")
    if not targets or all(not t.strip() for t in targets):
        raise EmptySide("target side is empty")
    run = _Run(backend, clock)
    predicted = mine_pairs(
        backend.embed_texts(sources, instruction), backend.embed_texts(targets, instruction), both_directions
    )
    scores = M.pair_f1(predicted, {(i, i) for i in range(len(sources))})
    return run.result(TaskKind.BITEXT_MINING, scores, metric, dataset_id=dataset_id, seed=seed)


EVALUATORS = {
    TaskKind.RETRIEVAL: eval_retrieval,
    TaskKind.CROSSLINGUAL_RETRIEVAL: eval_crosslingual_retrieval,
    TaskKind.RERANKING: eval_reranking,
    TaskKind.STS: eval_sts,
    TaskKind.CLASSIFICATION: eval_classification,
    TaskKind.PAIR_CLASSIFICATION: eval_pair_classification,
    TaskKind.CLUSTERING: eval_clustering,
    TaskKind.BITEXT_MINING: eval_bitext,
}
