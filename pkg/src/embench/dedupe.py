"""Near-duplicate detection with exact Jaccard over hashed word n-grams.

Candidate pairs come from an inverted index (shingle -> documents), so only
documents sharing at least one shingle are ever compared.  Pairs at or above
the threshold are merged transitively with union-find.
"""

from __future__ import annotations

import hashlib
from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .vectors import similarity_matrix

_HASH_KEY = b"embench-shingle"
_SEP = "\x1f"


@dataclass(frozen=True)
class ShingleSet:
    doc_id: str
    shingles: frozenset[int]

    def __len__(self):
        return len(self.shingles)


def _hash64(tokens: Sequence[str]) -> int:
    digest = hashlib.blake2b(_SEP.join(tokens).encode("utf-8"), digest_size=8, key=_HASH_KEY).digest()
    return int.from_bytes(digest, "little")


def shingle(text: str, n: int = 3, doc_id: str = "") -> ShingleSet:
    if n < 1:
        raise ValueError("shingle size must be >= 1")
    tokens = text.lower().split()
    if len(tokens) < n:
        # short documents (including empty ones) hash their whole token sequence
        return ShingleSet(doc_id, frozenset({_hash64(tokens)}))
    return ShingleSet(doc_id, frozenset(_hash64(tokens[i:i + n]) for i in range(len(tokens) - n + 1)))


def jaccard(a: ShingleSet, b: ShingleSet) -> float:
    sa, sb = a.shingles, b.shingles
    if not sa and not sb:
        return 1.0
    inter = len(sa & sb)
    return inter / (len(sa) + len(sb) - inter)


class UnionFind:
    def __init__(self, items: Iterable[str]):
        self.parent = {x: x for x in items}

    def find(self, x: str) -> str:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: str, b: str) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # the smaller id becomes the root, so roots are cluster representatives
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra

    def groups(self) -> list[list[str]]:
        out = defaultdict(list)
        for x in self.parent:
            out[self.find(x)].append(x)
        return sorted(sorted(g) for g in out.values())


@dataclass
class DedupeResult:
    kept: list[str]
    clusters: list[list[str]]
    input_count: int

    def to_report(self) -> dict:
        return {"input": self.input_count, "kept": len(self.kept), "clusters": self.clusters}


def _collate(ids: list[str], pairs: Iterable[tuple[str, str]]) -> DedupeResult:
    uf = UnionFind(ids)
    for a, b in pairs:
        uf.union(a, b)
    groups = uf.groups()
    return DedupeResult(
        kept=sorted(g[0] for g in groups),
        clusters=[g for g in groups if len(g) > 1],
        input_count=len(ids),
    )


def candidate_pairs(sets: Sequence[ShingleSet]) -> set[tuple[int, int]]:
    index: dict[int, list[int]] = defaultdict(list)
    for i, s in enumerate(sets):
        for h in s.shingles:
            index[h].append(i)
    pairs = set()
    for bucket in index.values():
        for x in range(len(bucket)):
            for y in range(x + 1, len(bucket)):
                pairs.add((bucket[x], bucket[y]))
    return pairs


def dedupe_corpus(docs: Sequence[tuple[str, str]], threshold: float = 0.8, n: int = 3) -> DedupeResult:
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must lie in (0, 1]")
    docs = list(docs)
    ids = [d for d, _ in docs]
    if len(set(ids)) != len(ids):
        raise ValueError("document ids must be unique")
    sets = [shingle(text, n, doc_id) for doc_id, text in docs]
    matches = (
        (ids[i], ids[j])
        for i, j in sorted(candidate_pairs(sets))
        if jaccard(sets[i], sets[j]) >= threshold
    )
    return _collate(ids, matches)


def semantic_dedupe(
    docs: Sequence[tuple[str, str]],
    embed: Callable[[list[str]], Sequence],
    threshold: float = 0.95,
) -> DedupeResult:
    """Same clustering, with cosine over embeddings replacing Jaccard."""
    docs = list(docs)
    ids = [d for d, _ in docs]
    if not docs:
        return DedupeResult([], [], 0)
    vectors = list(embed([t for _, t in docs]))
    sims = similarity_matrix(vectors, vectors)
    rows, cols = np.nonzero(np.triu(sims >= threshold, k=1))
    return _collate(ids, ((ids[i], ids[j]) for i, j in zip(rows.tolist(), cols.tolist())))
