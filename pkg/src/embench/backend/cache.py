"""Append-only binary vector store used for the embedding cache and precomputed vectors.

Layout (little endian)::

    b"EMBC" | u32 version (=1) | u32 dim | u64 record count
    then per record: 32-byte key digest | dim x f32
"""

from __future__ import annotations

import hashlib
import logging
import os
import struct
import threading
from pathlib import Path

import numpy as np

from ..errors import CacheCorrupt, DimensionMismatch
from ..types import EmbeddingVector

logger = logging.getLogger(__name__)

MAGIC = b"EMBC"
VERSION = 1
HEADER = struct.Struct("<4sIIQ")
KEY_BYTES = 32


def cache_key(model_name: str, instruction: str | None, text: str) -> bytes:
    h = hashlib.sha256()
    h.update(model_name.encode("utf-8"))
    h.update(b"\x1f")
    h.update((instruction or "").encode("utf-8"))
    h.update(b"\x1f")
    h.update(text.encode("utf-8"))
    return h.digest()


class VectorStore:
    """Persistent key -> vector map.

    A damaged file is reported through ``error`` and the log, then treated as
    empty; the first write afterwards starts a fresh file.
    """

    def __init__(self, path, dim: int | None = None):
        self.path = Path(path)
        self.dim = dim
        self.error: CacheCorrupt | None = None
        self._index: dict[bytes, int] = {}
        self._count = 0
        self._lock = threading.RLock()
        self._fh = None
        self._fresh = True
        if self.path.exists():
            try:
                self._load()
            except CacheCorrupt as exc:
                logger.warning("ignoring corrupt vector cache %s: %s", self.path, exc)
                self.error = exc
                self.dim = dim
                self._index = {}
                self._count = 0
                self._fresh = True

    # --- reading ---------------------------------------------------------------

    @property
    def record_size(self) -> int:
        return KEY_BYTES + 4 * self.dim

    def _load(self) -> None:
        size = self.path.stat().st_size
        with open(self.path, "rb") as fh:
            head = fh.read(HEADER.size)
        if len(head) < HEADER.size:
            raise CacheCorrupt("truncated header")
        magic, version, dim, count = HEADER.unpack(head)
        if magic != MAGIC:
            raise CacheCorrupt(f"bad magic {magic!r}")
        if version != VERSION:
            raise CacheCorrupt(f"unsupported version {version}")
        if dim < 1:
            raise CacheCorrupt("dim must be positive")
        if self.dim is not None and dim != self.dim:
            raise DimensionMismatch(f"{self.path} stores dim {dim}, expected {self.dim}")
        self.dim = dim
        expected = HEADER.size + count * self.record_size
        if size != expected:
            raise CacheCorrupt(f"file holds {size} bytes, header promises {expected}")
        if count:
            rec = np.dtype([("key", f"V{KEY_BYTES}"), ("vec", "<f4", (dim,))])
            records = np.memmap(self.path, dtype=rec, mode="r", offset=HEADER.size, shape=(count,))
            keys = records["key"]
            index = {}
            for i in range(count):
                index.setdefault(keys[i].tobytes(), i)
            del records
            self._index = index
        self._count = count
        self._fresh = False

    def __contains__(self, key: bytes) -> bool:
        return key in self._index

    def __len__(self) -> int:
        return len(self._index)

    def get(self, key: bytes) -> EmbeddingVector | None:
        with self._lock:
            slot = self._index.get(key)
            if slot is None:
                return None
            fh = self._handle()
            fh.seek(HEADER.size + slot * self.record_size + KEY_BYTES)
            raw = fh.read(4 * self.dim)
        return EmbeddingVector(np.frombuffer(raw, dtype="<f4"))

    def get_many(self, keys) -> list[EmbeddingVector | None]:
        return [self.get(k) for k in keys]

    # --- writing ---------------------------------------------------------------

    def _handle(self):
        if self._fh is None:
            self._fh = open(self.path, "r+b")
        return self._fh

    def _start_file(self) -> None:
        if self.dim is None:
            raise ValueError("dim unknown; pass dim when creating a new store")
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if self._fh is not None:
            self._fh.close()
            self._fh = None
        with open(self.path, "wb") as fh:
            fh.write(HEADER.pack(MAGIC, VERSION, self.dim, 0))
        self._index = {}
        self._count = 0
        self._fresh = False

    def put(self, key: bytes, vector: EmbeddingVector) -> None:
        self.put_many([(key, vector)])

    def put_many(self, items) -> None:
        with self._lock:
            items = [(k, v) for k, v in items]
            if not items:
                return
            if self.dim is None:
                self.dim = items[0][1].dim
            for key, vec in items:
                if len(key) != KEY_BYTES:
                    raise ValueError("keys must be 32-byte digests")
                if vec.dim != self.dim:
                    raise DimensionMismatch(f"vector dim {vec.dim} != store dim {self.dim}")
            if self._fresh:
                self._start_file()
            fh = self._handle()
            chunks = []
            count = self._count
            for key, vec in items:
                if key in self._index:
                    continue
                self._index[key] = count
                count += 1
                chunks.append(key + vec.values.astype("<f4").tobytes())
            if not chunks:
                return
            fh.seek(0, os.SEEK_END)
            fh.write(b"".join(chunks))
            fh.seek(0)
            fh.write(HEADER.pack(MAGIC, VERSION, self.dim, count))
            fh.flush()
            self._count = count

    def close(self) -> None:
        with self._lock:
            if self._fh is not None:
                self._fh.close()
                self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
