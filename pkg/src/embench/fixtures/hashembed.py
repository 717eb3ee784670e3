"""Seeded token-hashing pseudo-embedder for offline tests and demos."""

from __future__ import annotations

import hashlib
import math
import re
import struct
from dataclasses import dataclass

import numpy as np

from ..types import EmbeddingVector

_TOKEN_RE = re.compile(r"\w+")


def hash_tokens(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower()) or [""]


def _slot(token: str, dim: int, seed: int) -> tuple[int, float]:
    digest = hashlib.blake2b(
        token.encode("utf-8"), digest_size=16, key=struct.pack("<Q", seed & 0xFFFFFFFFFFFFFFFF)
    ).digest()
    index = int.from_bytes(digest[:8], "little") % dim
    sign = 1.0 if digest[8] & 1 else -1.0
    return index, sign


def hash_embed(text: str, dim: int = 64, seed: int = 0) -> EmbeddingVector:
    """Scatter a signed unit per token into ``dim`` buckets and L2-normalise.

    Texts sharing tokens share buckets, so token overlap drives cosine up.
    """
    acc = [0.0] * dim
    for tok in hash_tokens(text):
        index, sign = _slot(tok, dim, seed)
        acc[index] += sign
    norm = math.sqrt(sum(x * x for x in acc))
    if norm == 0.0:
        # all tokens cancelled out; any fixed unit vector keeps the output valid
        acc[0], norm = 1.0, 1.0
    return EmbeddingVector(np.array([x / norm for x in acc], dtype=np.float64))


@dataclass(frozen=True)
class HashEmbedder:
    dim: int = 64
    seed: int = 0

    def __call__(self, text: str) -> EmbeddingVector:
        return hash_embed(text, self.dim, self.seed)

    def embed_batch(self, texts) -> list[list[float]]:
        return [hash_embed(t, self.dim, self.seed).values.tolist() for t in texts]
