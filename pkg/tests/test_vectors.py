import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from embench.errors import DimensionMismatch, ZeroVector
from embench.types import EmbeddingVector
from embench.vectors import (
    CORPUS_CHUNK,
    EmbeddedCorpus,
    cosine,
    score_matrix,
    similarity_matrix,
    top_k,
    top_k_many,
)

finite = st.floats(-100, 100, allow_nan=False, width=32)
nonzero_vec = arrays(np.float32, 6, elements=finite).filter(lambda a: float(np.abs(a).max()) > 1e-3)


def vec(*xs):
    return EmbeddingVector(list(xs))


def scalar_cosine(a, b):
    dot = math.fsum(float(x) * float(y) for x, y in zip(a.values, b.values))
    return dot / (a.norm * b.norm)


# --- cosine ---------------------------------------------------------------------

def test_cosine_examples():
    assert cosine(vec(1, 0), vec(0, 1)) == 0.0
    assert cosine(vec(1, 1), vec(1, 0)) == pytest.approx(0.70710678, abs=1e-8)
    assert cosine(vec(3, -4, 1), vec(3, -4, 1)) == pytest.approx(1.0, abs=1e-9)


def test_cosine_errors():
    with pytest.raises(DimensionMismatch):
        cosine(vec(1, 0), vec(1, 0, 0))
    with pytest.raises(ZeroVector):
        cosine(vec(0, 0), vec(1, 0))


@given(nonzero_vec, nonzero_vec)
def test_cosine_symmetric_bitwise_and_bounded(a, b):
    va, vb = EmbeddingVector(a), EmbeddingVector(b)
    assert cosine(va, vb) == cosine(vb, va)
    assert -1.0 <= cosine(va, vb) <= 1.0


@given(nonzero_vec, nonzero_vec, st.sampled_from([0.5, 2.0, 4.0, 8.0]))
def test_cosine_scale_invariant(a, b, alpha):
    va, vb = EmbeddingVector(a), EmbeddingVector(b)
    assert cosine(EmbeddingVector(a * np.float32(alpha)), vb) == pytest.approx(cosine(va, vb), abs=1e-9)


# --- similarity matrix ------------------------------------------------------------

def test_similarity_matrix_identity():
    e = [vec(1, 0), vec(0, 1)]
    assert np.array_equal(similarity_matrix(e, e), np.eye(2))
    assert similarity_matrix([vec(2, 3)], [vec(2, 3)])[0, 0] == pytest.approx(1.0)


def test_similarity_matrix_matches_loop():
    rng = np.random.default_rng(0)
    rows = [EmbeddingVector(rng.normal(size=8)) for _ in range(2)]
    cols = [EmbeddingVector(rng.normal(size=8)) for _ in range(3)]
    m = similarity_matrix(rows, cols)
    for i, r in enumerate(rows):
        for j, c in enumerate(cols):
            assert m[i, j] == pytest.approx(scalar_cosine(r, c), abs=1e-12)
            assert m[i, j] == pytest.approx(cosine(r, c), abs=1e-12)


def test_similarity_matrix_dim_mismatch():
    with pytest.raises(DimensionMismatch):
        similarity_matrix([vec(1, 0)], [vec(1, 0, 0)])


# --- top-k ------------------------------------------------------------------------

def test_top_k_examples():
    q = vec(1, 0)
    hits = top_k(q, [("d1", vec(1, 0)), ("d2", vec(0, 1))], 1)
    assert [(h.doc_id, h.score) for h in hits] == [("d1", 1.0)]
    tied = top_k(q, [("dB", vec(1, 1)), ("dA", vec(1, 1))], 2)
    assert [h.doc_id for h in tied] == ["dA", "dB"]
    assert len(top_k(q, [("a", vec(1, 0)), ("b", vec(0, 1)), ("c", vec(1, 1))], 10)) == 3


def test_top_k_dim_mismatch():
    with pytest.raises(DimensionMismatch):
        top_k(vec(1, 0, 0), [("a", vec(1, 0))], 1)


def test_tie_break_survives_k_cutoff():
    # many exact ties straddling the cutoff must resolve by id, not by row order
    corpus = [(f"d{i:02d}", vec(1, 0)) for i in reversed(range(20))]
    hits = top_k(vec(1, 0), corpus, 5)
    assert [h.doc_id for h in hits] == ["d00", "d01", "d02", "d03", "d04"]


def random_corpus(rng, n, dim, quantize=False):
    m = rng.normal(size=(n, dim)).astype(np.float32)
    if quantize:
        m = np.round(m).astype(np.float32)  # creates many exact ties
    m[np.abs(m).sum(axis=1) == 0, 0] = 1.0
    ids = [f"doc{i:05d}" for i in rng.permutation(n)]
    return EmbeddedCorpus(ids, m)


@pytest.mark.parametrize("quantize", [False, True])
def test_full_ranking_matches_brute_force(quantize):
    rng = np.random.default_rng(7)
    corpus = random_corpus(rng, 60, 5, quantize)
    queries = [EmbeddingVector(np.round(rng.normal(size=5)) + 0.5) for _ in range(10)]
    for q, hits in zip(queries, top_k_many(queries, corpus, len(corpus))):
        ref = sorted(
            ((-scalar_cosine(q, EmbeddingVector(corpus.matrix[i])), corpus.ids[i]) for i in range(len(corpus))),
        )
        assert [h.doc_id for h in hits] == [d for _, d in ref] or all(
            # scores equal to float noise may order either way; compare scores instead
            abs(h.score + s) <= 1e-12 for h, (s, _) in zip(hits, ref)
        )
        assert sorted(h.score for h in hits) == pytest.approx(sorted(-s for s, _ in ref), abs=1e-12)


def test_top_k_deterministic_across_workers_and_chunks():
    rng = np.random.default_rng(3)
    corpus = random_corpus(rng, CORPUS_CHUNK + 500, 8, quantize=True)
    queries = [EmbeddingVector(np.round(rng.normal(size=8))) for _ in range(70)]
    queries = [q if q.norm > 0 else vec(*([1.0] + [0.0] * 7)) for q in queries]
    base = top_k_many(queries, corpus, 10, workers=1)
    for workers in (2, 4, 8):
        assert top_k_many(queries, corpus, 10, workers=workers) == base
    assert score_matrix(queries[:5], corpus, workers=1).tobytes() == score_matrix(queries[:5], corpus, workers=4).tobytes()


def test_query_scores_do_not_depend_on_batch_membership():
    rng = np.random.default_rng(5)
    corpus = random_corpus(rng, 100, 16)
    queries = [EmbeddingVector(rng.normal(size=16)) for _ in range(40)]
    together = score_matrix(queries, corpus)
    alone = np.vstack([score_matrix([q], corpus) for q in queries])
    assert together.tobytes() == alone.tobytes()


def test_corpus_rejects_duplicate_ids():
    with pytest.raises(ValueError):
        EmbeddedCorpus(["a", "a"], np.ones((2, 2), dtype=np.float32))
