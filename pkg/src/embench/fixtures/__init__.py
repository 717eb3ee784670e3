"""Offline test assets: the hash embedder and one tiny dataset per task family.

Expected scores in ``fixture_data/expected.json`` are written by the
straight-line oracle under ``tests/oracles`` and never by this package.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

from ..backend.client import BackendSpec
from ..data import load_manifest, load_task_data
from ..prompts import resolve_instruction
from ..types import DatasetManifest, TaskData, TaskKind
from .hashembed import HashEmbedder, hash_embed, hash_tokens

FIXTURE_ROOT = Path(__file__).resolve().parent.parent / "fixture_data"
EXPECTED_PATH = FIXTURE_ROOT / "expected.json"
FIXTURE_SEEDS = (0, 1, 2)
FIXTURE_DIM = 64


@dataclass(frozen=True)
class Fixture:
    manifest: DatasetManifest
    data: TaskData
    instruction: str
    expected: float | None

    def __iter__(self):
        # unpacks as (data, expected)
        return iter((self.data, self.expected))


def fixture_manifest_path(task) -> Path:
    return FIXTURE_ROOT / TaskKind.parse(task).value / "manifest.json"


def all_manifest_paths() -> list[Path]:
    return [fixture_manifest_path(t) for t in TaskKind]


@lru_cache(maxsize=1)
def expected_scores() -> dict[str, dict[str, float]]:
    return json.loads(EXPECTED_PATH.read_text(encoding="utf-8"))["main_score"]


def make_fixture(task, seed: int = 0) -> Fixture:
    """Load the fixture for ``task``; ``expected`` is its main score under ``HashEmbedder(64, seed)``.

    Seeds outside ``FIXTURE_SEEDS`` have no precomputed score and get ``None``.
    """
    task = TaskKind.parse(task)
    manifest = load_manifest(fixture_manifest_path(task))
    expected = expected_scores()[task.value].get(str(seed))
    return Fixture(manifest, load_task_data(manifest), resolve_instruction(manifest), expected)


def fixture_backend_spec(seed: int = 0, dim: int = FIXTURE_DIM, **overrides) -> BackendSpec:
    fields = {"id": f"hash-{dim}-s{seed}", "kind": "hash", "model_name": "hash-embedder", "dim": dim, "seed": seed}
    fields.update(overrides)
    return BackendSpec(**fields)


__all__ = [
    "FIXTURE_ROOT", "FIXTURE_SEEDS", "Fixture", "HashEmbedder", "all_manifest_paths", "expected_scores",
    "fixture_backend_spec", "fixture_manifest_path", "hash_embed", "hash_tokens", "make_fixture",
]
