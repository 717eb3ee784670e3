"""Embedding producers behind one interface: remote service, precomputed store, hash embedder."""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import httpx

from ..errors import (
    BackendProtocolError,
    BackendUnavailable,
    ConfigError,
    DimensionMismatch,
    MissingVector,
)
from ..prompts import apply_instruction
from ..types import EmbeddingVector
from .cache import VectorStore, cache_key
from .ledger import UsageLedger, estimate_tokens

logger = logging.getLogger(__name__)

BACKEND_KINDS = ("remote", "precomputed", "hash")


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 4
    base_backoff_ms: int = 250

    def delay_s(self, attempt: int) -> float:
        """Pause after failed attempt number ``attempt`` (1-based)."""
        return self.base_backoff_ms * 2 ** (attempt - 1) / 1000.0


@dataclass(frozen=True)
class BackendSpec:
    id: str
    kind: str
    model_name: str
    dim: int
    endpoint: str | None = None
    vectors_path: Path | None = None
    cache_path: Path | None = None
    max_batch: int = 64
    max_concurrency: int = 4
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    price_per_million_tokens: float = 0.0
    adapter: str = "generic"
    api_key_env: str | None = None
    timeout_s: float = 60.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in BACKEND_KINDS:
            raise ConfigError(f"backend {self.id!r}: kind must be one of {BACKEND_KINDS}")
        if self.kind == "remote" and not self.endpoint:
            raise ConfigError(f"backend {self.id!r}: remote backends need an endpoint")
        if self.kind == "precomputed" and not self.vectors_path:
            raise ConfigError(f"backend {self.id!r}: precomputed backends need vectors_path")
        if self.dim < 1 or self.max_batch < 1 or self.max_concurrency < 1:
            raise ConfigError(f"backend {self.id!r}: dim, max_batch and max_concurrency must be positive")
        if self.retry.max_attempts < 1:
            raise ConfigError(f"backend {self.id!r}: retry.max_attempts must be >= 1")
        if self.price_per_million_tokens < 0:
            raise ConfigError(f"backend {self.id!r}: price must be nonnegative")
        if self.adapter not in EMBED_ADAPTERS:
            raise ConfigError(f"backend {self.id!r}: unknown adapter {self.adapter!r}")

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path | str = ".") -> "BackendSpec":
        raw = dict(raw)
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown backend fields {sorted(unknown)}")
        for key in ("id", "kind", "model_name", "dim"):
            if key not in raw:
                raise ConfigError(f"backend missing required field {key!r}")
        retry = raw.pop("retry", None) or {}
        if not isinstance(retry, dict):
            raise ConfigError("retry must be a mapping")
        base = Path(base_dir)
        for key in ("vectors_path", "cache_path"):
            if raw.get(key):
                p = Path(raw[key])
                raw[key] = p if p.is_absolute() else base / p
        try:
            return cls(retry=RetryPolicy(**retry), **raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("vectors_path", "cache_path"):
            if out[key] is not None:
                out[key] = str(out[key])
        return out


# --- wire adapters: pure payload transformations ------------------------------

def _generic_request(model: str, texts: list[str]) -> dict:
    return {"model": model, "input": texts}


def _generic_response(body: dict) -> list:
    return body["embeddings"]


def _openai_response(body: dict) -> list:
    rows = sorted(body["data"], key=lambda r: r["index"])
    return [r["embedding"] for r in rows]


def _cohere_request(model: str, texts: list[str]) -> dict:
    return {"model": model, "texts": texts, "input_type": "search_document", "embedding_types": ["float"]}


def _cohere_response(body: dict) -> list:
    emb = body["embeddings"]
    return emb["float"] if isinstance(emb, dict) else emb


EMBED_ADAPTERS: dict[str, tuple[Callable, Callable]] = {
    "generic": (_generic_request, _generic_response),
    "openai": (_generic_request, _openai_response),
    "cohere": (_cohere_request, _cohere_response),
}


def post_json(
    client: httpx.Client,
    url: str,
    payload: dict,
    retry: RetryPolicy,
    headers: dict | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> dict:
    """POST with exponential backoff on transport errors, 429 and 5xx."""
    last = "no attempt made"
    for attempt in range(1, retry.max_attempts + 1):
        try:
            resp = client.post(url, json=payload, headers=headers or {})
        except httpx.TransportError as exc:
            last = f"{type(exc).__name__}: {exc}"
        else:
            if resp.status_code == 429 or resp.status_code >= 500:
                last = f"HTTP {resp.status_code}"
            elif resp.status_code >= 400:
                raise BackendUnavailable(f"{url} rejected the request: HTTP {resp.status_code}")
            else:
                try:
                    return resp.json()
                except ValueError:
                    raise BackendProtocolError(f"{url} returned a non-JSON body") from None
        if attempt < retry.max_attempts:
            sleep(retry.delay_s(attempt))
    raise BackendUnavailable(f"{url} unavailable after {retry.max_attempts} attempts ({last})")


class _MemoryStore(dict):
    def get_many(self, keys):
        return [self.get(k) for k in keys]

    def put_many(self, items):
        for k, v in items:
            self.setdefault(k, v)


class Backend:
    """Runtime embedding producer built from a :class:`BackendSpec`.

    ``embed_texts`` consults the cache first and only sends misses to the
    producer; the usage ledger counts those requests only.
    """

    def __init__(
        self,
        spec: BackendSpec,
        *,
        transport: httpx.BaseTransport | None = None,
        clock: Callable[[], float] = time.perf_counter,
        sleep: Callable[[float], None] = time.sleep,
        cache=None,
    ):
        self.spec = spec
        self.ledger = UsageLedger(spec.price_per_million_tokens)
        self._clock = clock
        self._sleep = sleep
        self._client = None
        self._store = None
        if spec.kind == "precomputed":
            self._store = VectorStore(spec.vectors_path, spec.dim)
            if self._store.error is not None:
                raise ConfigError(f"precomputed store unreadable: {self._store.error}")
            self.cache = None
        elif cache is not None:
            self.cache = cache
        elif spec.cache_path is not None:
            self.cache = VectorStore(spec.cache_path, spec.dim)
        else:
            self.cache = _MemoryStore()
        if spec.kind == "remote":
            self._client = httpx.Client(transport=transport, timeout=spec.timeout_s)
            self._headers = {}
            if spec.api_key_env:
                token = os.environ.get(spec.api_key_env)
                if not token:
                    raise ConfigError(f"environment variable {spec.api_key_env} is not set")
                self._headers["Authorization"] = f"Bearer {token}"
        elif spec.kind == "hash":
            from ..fixtures.hashembed import HashEmbedder

            self._hasher = HashEmbedder(spec.dim, spec.seed)

    def close(self) -> None:
        if self._client is not None:
            self._client.close()
        for store in (self.cache, self._store):
            if isinstance(store, VectorStore):
                store.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # --- producers --------------------------------------------------------------

    def _produce(self, payloads: list[str]) -> list:
        if self.spec.kind == "hash":
            return self._hasher.embed_batch(payloads)
        make_request, read_response = EMBED_ADAPTERS[self.spec.adapter]
        body = post_json(
            self._client,
            self.spec.endpoint,
            make_request(self.spec.model_name, payloads),
            self.spec.retry,
            headers=self._headers,
            sleep=self._sleep,
        )
        try:
            rows = read_response(body)
        except (KeyError, TypeError, IndexError) as exc:
            raise BackendProtocolError(f"malformed embedding response: {exc!r}") from None
        if not isinstance(rows, list) or len(rows) != len(payloads):
            raise BackendProtocolError(
                f"service returned {len(rows) if isinstance(rows, list) else '?'} rows for {len(payloads)} inputs"
            )
        return rows

    def _fetch(self, payloads: list[str]) -> list[EmbeddingVector]:
        start = self._clock()
        rows = self._produce(payloads)
        elapsed_ms = (self._clock() - start) * 1000.0
        vectors = []
        for row in rows:
            if not isinstance(row, (list, tuple)) or len(row) != self.spec.dim:
                width = len(row) if isinstance(row, (list, tuple)) else "?"
                raise DimensionMismatch(f"service returned width {width}, expected {self.spec.dim}")
            vectors.append(EmbeddingVector(row))
        self.ledger.record(len(payloads), sum(estimate_tokens(p) for p in payloads), elapsed_ms)
        return vectors

    def embed_texts(self, texts: Sequence[str], instruction: str | None = None) -> list[EmbeddingVector]:
        texts = list(texts)
        if not texts:
            raise ValueError("embed_texts needs at least one text")
        instruction = instruction or None
        payloads = [apply_instruction(instruction, t) for t in texts]

        if self.spec.kind == "precomputed":
            out = []
            for payload in payloads:
                vec = self._store.get(cache_key(self.spec.model_name, None, payload))
                if vec is None:
                    raise MissingVector(f"no precomputed vector for text {payload[:60]!r}")
                out.append(vec)
            return out

        keys = [cache_key(self.spec.model_name, instruction, t) for t in texts]
        found = dict(zip(keys, self.cache.get_many(keys)))
        missing: dict[bytes, str] = {}
        for key, payload in zip(keys, payloads):
            if found[key] is None and key not in missing:
                missing[key] = payload
        if missing:
            miss_keys = list(missing)
            step = self.spec.max_batch
            batches = [miss_keys[i:i + step] for i in range(0, len(miss_keys), step)]
            workers = min(self.spec.max_concurrency, len(batches))
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(lambda b: self._fetch([missing[k] for k in b]), batches))
            fresh = [(k, v) for batch, vecs in zip(batches, results) for k, v in zip(batch, vecs)]
            self.cache.put_many(fresh)
            found.update(fresh)
        return [found[k] for k in keys]
