import math
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from embench.errors import CorpusTooSmall, DimensionMismatch, NonPositiveTemperature, UnknownPositive
from embench.mining import (
    TextCorpus,
    info_nce,
    mine_hard_negatives,
    select_negatives,
    supported_negative_counts,
)
from embench.types import EmbeddingVector
from embench.vectors import EmbeddedCorpus


def v(*xs):
    return EmbeddingVector(list(xs))


def planted(order):
    """Corpus whose cosine ranking against query [1, 0] follows ``order``."""
    n = len(order)
    docs, vecs = [], []
    for rank, doc_id in enumerate(order):
        angle = (rank + 1) * (math.pi / 2) / (n + 1)
        docs.append((doc_id, f"text of {doc_id}"))
        vecs.append(v(math.cos(angle), math.sin(angle)))
    return TextCorpus(docs, vecs)


QUERY = v(1.0, 0.0)


def test_definition_examples():
    corpus = planted(["pos", "a", "b", "c"])
    ex = mine_hard_negatives("q", "pos", corpus, 2, query_vector=QUERY)
    assert ex.negative_ids == ["a", "b"]
    assert ex.negatives == ["text of a", "text of b"]
    assert ex.positive == "text of pos"
    assert ex.negative_ranks == [2, 3]


def test_positive_below_top():
    corpus = planted(["a", "b", "pos", "c"])
    ex = mine_hard_negatives("q", "pos", corpus, 2, query_vector=QUERY)
    assert ex.negative_ids == ["a", "b"]
    assert ex.negative_ranks == [1, 2]


def test_skip_top_guard():
    corpus = planted(["pos", "a", "b", "c"])
    ex = mine_hard_negatives("q", "pos", corpus, 2, skip_top=1, query_vector=QUERY)
    assert ex.negative_ids == ["b", "c"]


def test_errors():
    corpus = planted(["pos", "a", "b", "c"])
    with pytest.raises(CorpusTooSmall):
        mine_hard_negatives("q", "pos", corpus, 4, query_vector=QUERY)
    with pytest.raises(CorpusTooSmall):
        mine_hard_negatives("q", "pos", corpus, 3, skip_top=1, query_vector=QUERY)
    with pytest.raises(UnknownPositive):
        mine_hard_negatives("q", "zzz", corpus, 1, query_vector=QUERY)
    with pytest.raises(DimensionMismatch):
        mine_hard_negatives("q", "pos", corpus, 1, query_vector=v(1, 0, 0))
    with pytest.raises(ValueError):
        mine_hard_negatives("q", "pos", corpus, 1)


def test_ties_break_by_id_and_input_order_is_irrelevant():
    items = [("d3", v(1, 1)), ("d1", v(1, 1)), ("d2", v(1, 1)), ("p", v(1, 0)), ("d0", v(0, 1))]
    expected = None
    rng = random.Random(0)
    for _ in range(10):
        rng.shuffle(items)
        corpus = EmbeddedCorpus.from_vectors(items)
        ids, _ = select_negatives(QUERY, corpus, "p", 4)
        expected = expected or ids
        assert ids == expected == ["d1", "d2", "d3", "d0"]


def test_mining_through_a_backend():
    class Echo:
        def embed_texts(self, texts, instruction=None):
            table = {"q": [1, 0], "pos": [1, 0.1], "near": [1, 0.5], "far": [0, 1]}
            return [v(*table[t.removeprefix("I: ")]) for t in texts]

    corpus = TextCorpus.embed(Echo(), [("p", "pos"), ("n1", "near"), ("n2", "far")])
    ex = mine_hard_negatives("q", "p", corpus, 1, backend=Echo(), instruction="I: {}")
    assert ex.to_json() == {"query": "q", "positive": "pos", "negatives": ["near"]}


def test_supported_counts():
    grid = supported_negative_counts()
    assert grid == [1, 3, 7, 15, 31]
    assert 15 in grid and 7 in grid


# --- InfoNCE --------------------------------------------------------------------------

def test_info_nce_examples():
    assert info_nce(QUERY, QUERY) == 0.0
    assert info_nce(QUERY, QUERY, [v(-1, 0)], temperature=1.0) == pytest.approx(
        -math.log(math.e / (math.e + 1 / math.e)), abs=1e-12
    )
    assert info_nce(QUERY, QUERY, [v(-1, 0)], temperature=1.0) == pytest.approx(0.12693, abs=1e-5)
    pos = v(0.6, 0.8)
    for t in (0.05, 0.5, 2.0):
        assert info_nce(QUERY, pos, [pos], temperature=t) == pytest.approx(math.log(2), abs=1e-12)
        assert info_nce(QUERY, pos, [pos, pos, pos], temperature=t) == pytest.approx(math.log(4), abs=1e-12)


def test_info_nce_errors():
    with pytest.raises(NonPositiveTemperature):
        info_nce(QUERY, QUERY, temperature=0.0)
    with pytest.raises(DimensionMismatch):
        info_nce(QUERY, v(1, 0, 0))


def test_info_nce_is_stable_at_low_temperature():
    value = info_nce(QUERY, v(-1, 0), [v(1, 0)], temperature=1e-4)
    assert math.isfinite(value) and value == pytest.approx(2e4)


vec3 = arrays(np.float64, 3, elements=st.floats(-5, 5)).filter(lambda a: np.abs(a).max() > 1e-2)


@given(vec3, vec3, st.lists(vec3, max_size=5), vec3, st.sampled_from([0.05, 0.1, 1.0]))
def test_adding_a_negative_never_lowers_loss(q, p, negs, extra, t):
    q, p, extra = EmbeddingVector(q), EmbeddingVector(p), EmbeddingVector(extra)
    negs = [EmbeddingVector(n) for n in negs]
    assert info_nce(q, p, negs + [extra], t) >= info_nce(q, p, negs, t) - 1e-12


@given(vec3, vec3, vec3, vec3, st.sampled_from([0.05, 0.1, 1.0]))
def test_harder_negative_never_lowers_loss(q, p, a, b, t):
    q, p, a, b = map(EmbeddingVector, (q, p, a, b))
    from embench.vectors import cosine

    easy, hard = (a, b) if cosine(q, a) <= cosine(q, b) else (b, a)
    assert info_nce(q, p, [hard], t) >= info_nce(q, p, [easy], t) - 1e-12
