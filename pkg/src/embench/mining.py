"""Hard-negative mining over an embedded corpus, and an InfoNCE scorer."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from .errors import CorpusTooSmall, DimensionMismatch, NonPositiveTemperature, UnknownPositive
from .types import EmbeddingVector
from .vectors import EmbeddedCorpus, cosine, rank_row, score_matrix

NEGATIVE_COUNT_GRID = (1, 3, 7, 15, 31)
DEFAULT_TEMPERATURE = 0.05


def supported_negative_counts() -> list[int]:
    """Negative counts of the standard sweep; any positive count is accepted by the miner."""
    return list(NEGATIVE_COUNT_GRID)


@dataclass(frozen=True)
class MinedExample:
    query: str
    positive: str
    negatives: list[str]
    negative_ranks: list[int]
    negative_ids: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"query": self.query, "positive": self.positive, "negatives": list(self.negatives)}


def select_negatives(
    query: EmbeddingVector,
    corpus: EmbeddedCorpus,
    positive_id: str,
    n: int,
    skip_top: int = 0,
) -> tuple[list[str], list[int]]:
    """Ids and 1-based similarity ranks of mined negatives.

    The positive is dropped wherever it ranks; the ``skip_top`` best remaining
    documents are passed over as likely false negatives.
    """
    if n < 1 or skip_top < 0:
        raise ValueError("n must be positive and skip_top nonnegative")
    try:
        pos_row = corpus.position(positive_id)
    except KeyError:
        raise UnknownPositive(positive_id) from None
    if n + skip_top > len(corpus) - 1:
        raise CorpusTooSmall(f"{len(corpus)} documents cannot supply {n} negatives after skipping {skip_top}")
    if query.dim != corpus.dim:
        raise DimensionMismatch(f"query dim {query.dim} != corpus dim {corpus.dim}")
    order = rank_row(score_matrix([query], corpus)[0], corpus)
    ids, ranks = [], []
    skipped = 0
    for rank, row in enumerate(order, start=1):
        if row == pos_row:
            continue
        if skipped < skip_top:
            skipped += 1
            continue
        ids.append(corpus.ids[row])
        ranks.append(rank)
        if len(ids) == n:
            break
    return ids, ranks


class TextCorpus:
    """An embedded corpus that remembers the text behind every id."""

    def __init__(self, documents: Sequence[tuple[str, str]], vectors: Sequence[EmbeddingVector]):
        self.texts = {doc_id: text for doc_id, text in documents}
        self.vectors = EmbeddedCorpus.from_vectors(zip((d for d, _ in documents), vectors))

    @classmethod
    def embed(cls, backend, documents: Sequence[tuple[str, str]]) -> "TextCorpus":
        documents = list(documents)
        return cls(documents, backend.embed_texts([t for _, t in documents]))

    def __len__(self):
        return len(self.texts)


def mine_hard_negatives(
    query: str,
    positive_id: str,
    corpus: TextCorpus,
    n: int,
    skip_top: int = 0,
    *,
    query_vector: EmbeddingVector | None = None,
    backend=None,
    instruction: str | None = None,
) -> MinedExample:
    if positive_id not in corpus.texts:
        raise UnknownPositive(positive_id)
    if query_vector is None:
        if backend is None:
            raise ValueError("pass query_vector or a backend to embed the query")
        query_vector = backend.embed_texts([query], instruction)[0]
    ids, ranks = select_negatives(query_vector, corpus.vectors, positive_id, n, skip_top)
    return MinedExample(
        query=query,
        positive=corpus.texts[positive_id],
        negatives=[corpus.texts[i] for i in ids],
        negative_ranks=ranks,
        negative_ids=ids,
    )


def info_nce(
    query: EmbeddingVector,
    positive: EmbeddingVector,
    negatives: Sequence[EmbeddingVector] = (),
    temperature: float = DEFAULT_TEMPERATURE,
) -> float:
    """Contrastive loss with similarity ``exp(cos / temperature)``."""
    if not temperature > 0:
        raise NonPositiveTemperature(f"temperature must be > 0, got {temperature}")
    logits = [cosine(query, positive) / temperature]
    logits += [cosine(query, neg) / temperature for neg in negatives]
    top = max(logits)
    log_norm = top + math.log(math.fsum(math.exp(s - top) for s in logits))
    return max(0.0, log_norm - logits[0])
