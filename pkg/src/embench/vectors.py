"""Exact dense similarity: cosine, similarity matrices and brute-force top-k.

All products are accumulated in float64.  Scores for a query are always
computed inside a fixed-shape query block against fixed corpus chunks, so
the bits of every score depend only on the inputs and never on how many
worker threads share the work.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, ZeroVector
from .types import EmbeddingVector

QUERY_BLOCK = 32
CORPUS_CHUNK = 8192


@dataclass(frozen=True, slots=True)
class ScoredDoc:
    doc_id: str
    score: float


class EmbeddedCorpus:
    """Row-stacked float32 vectors with ids, float64 norms and an id order."""

    def __init__(self, ids: Sequence[str], matrix, norms=None):
        matrix = np.ascontiguousarray(matrix, dtype=np.float32)
        if matrix.ndim != 2:
            raise ValueError("corpus matrix must be 2-D")
        ids = [str(i) for i in ids]
        if len(ids) != matrix.shape[0]:
            raise ValueError("ids and matrix rows differ in length")
        if len(set(ids)) != len(ids):
            raise ValueError("corpus ids must be unique")
        if norms is None:
            norms = np.empty(matrix.shape[0], dtype=np.float64)
            for s in range(0, matrix.shape[0], CORPUS_CHUNK):
                c = matrix[s:s + CORPUS_CHUNK].astype(np.float64)
                norms[s:s + CORPUS_CHUNK] = np.sqrt(np.einsum("ij,ij->i", c, c))
        self.ids = ids
        self.matrix = matrix
        self.norms = np.asarray(norms, dtype=np.float64)
        self._id_rank = None
        self._index = None

    @classmethod
    def from_vectors(cls, items) -> "EmbeddedCorpus":
        """Build from ``(id, EmbeddingVector)`` pairs."""
        items = list(items)
        if not items:
            return cls([], np.zeros((0, 1), dtype=np.float32), np.zeros(0))
        dims = {v.dim for _, v in items}
        if len(dims) != 1:
            raise DimensionMismatch(f"corpus vectors have mixed dims {sorted(dims)}")
        matrix = np.stack([v.values for _, v in items])
        norms = np.array([v.norm for _, v in items], dtype=np.float64)
        return cls([i for i, _ in items], matrix, norms)

    def __len__(self):
        return len(self.ids)

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    @property
    def id_rank(self) -> np.ndarray:
        """Position of each row when ids are sorted lexicographically."""
        if self._id_rank is None:
            order = sorted(range(len(self.ids)), key=self.ids.__getitem__)
            rank = np.empty(len(self.ids), dtype=np.int64)
            rank[order] = np.arange(len(self.ids))
            self._id_rank = rank
        return self._id_rank

    def position(self, doc_id: str) -> int:
        if self._index is None:
            self._index = {d: i for i, d in enumerate(self.ids)}
        return self._index[doc_id]

    def vector(self, doc_id: str) -> EmbeddingVector:
        return EmbeddingVector(self.matrix[self.position(doc_id)])


def _as_corpus(corpus) -> EmbeddedCorpus:
    if isinstance(corpus, EmbeddedCorpus):
        return corpus
    return EmbeddedCorpus.from_vectors(corpus)


def _check_pair(a: EmbeddingVector, b: EmbeddingVector) -> None:
    if a.dim != b.dim:
        raise DimensionMismatch(f"dims differ: {a.dim} vs {b.dim}")
    if a.norm == 0.0 or b.norm == 0.0:
        raise ZeroVector("cosine is undefined for a zero vector")


def _clamp(x: float) -> float:
    return 1.0 if x > 1.0 else (-1.0 if x < -1.0 else x)


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    _check_pair(a, b)
    dot = float(np.dot(a.as_float64(), b.as_float64()))
    # Multiply the norms in sorted order so cosine(a, b) == cosine(b, a) bitwise.
    na, nb = sorted((a.norm, b.norm))
    return _clamp(dot / (na * nb))


def similarity_matrix(rows: Sequence[EmbeddingVector], cols: Sequence[EmbeddingVector]) -> np.ndarray:
    rows, cols = list(rows), list(cols)
    if not rows or not cols:
        return np.zeros((len(rows), len(cols)))
    dims = {v.dim for v in rows} | {v.dim for v in cols}
    if len(dims) != 1:
        raise DimensionMismatch(f"mixed dims {sorted(dims)}")
    rn = np.array([v.norm for v in rows])
    cn = np.array([v.norm for v in cols])
    if (rn == 0).any() or (cn == 0).any():
        raise ZeroVector("cosine is undefined for a zero vector")
    R = np.stack([v.values for v in rows]).astype(np.float64)
    C = np.stack([v.values for v in cols]).astype(np.float64)
    dots = R @ C.T
    lo = np.minimum(rn[:, None], cn[None, :])
    hi = np.maximum(rn[:, None], cn[None, :])
    return np.clip(dots / (lo * hi), -1.0, 1.0)


def score_matrix(queries: Sequence[EmbeddingVector], corpus, workers: int = 1) -> np.ndarray:
    """Cosine of every query against every corpus row, shape (n_queries, n_docs)."""
    corpus = _as_corpus(corpus)
    queries = list(queries)
    nq, nd = len(queries), len(corpus)
    if nd == 0:
        raise ValueError("corpus is empty")
    for q in queries:
        if q.dim != corpus.dim:
            raise DimensionMismatch(f"query dim {q.dim} != corpus dim {corpus.dim}")
        if q.norm == 0.0:
            raise ZeroVector("query vector is zero")
    if (corpus.norms == 0).any():
        raise ZeroVector("corpus contains a zero vector")
    n_blocks = max(1, math.ceil(nq / QUERY_BLOCK))
    padded = np.zeros((n_blocks * QUERY_BLOCK, corpus.dim), dtype=np.float64)
    for i, q in enumerate(queries):
        padded[i] = q.as_float64()
    dots = np.empty((padded.shape[0], nd), dtype=np.float64)

    def block(b, chunk, s):
        lo = b * QUERY_BLOCK
        dots[lo:lo + QUERY_BLOCK, s:s + chunk.shape[0]] = padded[lo:lo + QUERY_BLOCK] @ chunk.T

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        for s in range(0, nd, CORPUS_CHUNK):
            chunk = corpus.matrix[s:s + CORPUS_CHUNK].astype(np.float64)
            list(pool.map(lambda b: block(b, chunk, s), range(n_blocks)))
    dots = dots[:nq]
    qn = np.array([q.norm for q in queries], dtype=np.float64)
    lo = np.minimum(qn[:, None], corpus.norms[None, :])
    hi = np.maximum(qn[:, None], corpus.norms[None, :])
    return np.clip(dots / (lo * hi), -1.0, 1.0)


def rank_row(scores: np.ndarray, corpus: EmbeddedCorpus, k: int | None = None) -> np.ndarray:
    """Row indices ordered by score descending, ties by ascending doc id."""
    n = scores.shape[0]
    if k is None or k >= n:
        cand = np.arange(n)
    else:
        part = np.argpartition(-scores, k - 1)[:k]
        cutoff = scores[part].min()
        # Keep every row tied with the k-th score so the id tie-break is exact.
        cand = np.flatnonzero(scores >= cutoff)
    order = np.lexsort((corpus.id_rank[cand], -scores[cand]))
    out = cand[order]
    return out if k is None else out[:k]


def top_k_many(queries: Sequence[EmbeddingVector], corpus, k: int, workers: int = 1) -> list[list[ScoredDoc]]:
    if k < 1:
        raise ValueError("k must be positive")
    corpus = _as_corpus(corpus)
    scores = score_matrix(queries, corpus, workers=workers)

    def select(i):
        row = scores[i]
        return [ScoredDoc(corpus.ids[j], float(row[j])) for j in rank_row(row, corpus, k)]

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(select, range(scores.shape[0])))


def top_k(query: EmbeddingVector, corpus, k: int) -> list[ScoredDoc]:
    return top_k_many([query], corpus, k)[0]
