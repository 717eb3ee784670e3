from .kmeans import kmeans
from .probe import ClassifierModel, train_linear_classifier
from .tasks import (
    EVALUATORS,
    EvalResult,
    eval_bitext,
    eval_classification,
    eval_clustering,
    eval_crosslingual_retrieval,
    eval_pair_classification,
    eval_reranking,
    eval_retrieval,
    eval_sts,
    mine_pairs,
)

__all__ = [
    "EVALUATORS",
    "ClassifierModel",
    "EvalResult",
    "eval_bitext",
    "eval_classification",
    "eval_clustering",
    "eval_crosslingual_retrieval",
    "eval_pair_classification",
    "eval_reranking",
    "eval_retrieval",
    "eval_sts",
    "kmeans",
    "mine_pairs",
    "train_linear_classifier",
]
