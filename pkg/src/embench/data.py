"""Manifest parsing and loaders for the line-oriented dataset formats."""

from __future__ import annotations

import json
import logging
import math
from pathlib import Path
from typing import Iterator

from .errors import DanglingReference, EmptyDataset, ItemWithoutPositive, ParseError, ValidationError
from .types import (
    KNOWN_ROLES,
    NEEDS_TARGET_LANGUAGE,
    REQUIRED_ROLES,
    BitextData,
    ClassificationData,
    ClusteringData,
    DatasetManifest,
    PairClassificationData,
    Qrels,
    RerankingData,
    RerankItem,
    RetrievalData,
    STSData,
    TaskData,
    TaskKind,
)

logger = logging.getLogger(__name__)

_MANIFEST_FIELDS = {
    "id", "task", "language", "target_language", "dialect", "paths",
    "metric", "metric_override", "instruction", "score_range",
}


def _optional_str(raw: dict, key: str, path) -> str | None:
    value = raw.get(key)
    if value is None:
        return None
    if not isinstance(value, str):
        raise ValidationError(f"{path}: field {key!r} must be a string")
    return value


def parse_manifest(raw: dict, base_dir: Path | str = ".", source="<manifest>") -> DatasetManifest:
    """Validate a manifest mapping; relative paths resolve against ``base_dir``."""
    if not isinstance(raw, dict):
        raise ParseError("manifest must be a JSON object", source)
    unknown = set(raw) - _MANIFEST_FIELDS
    if unknown:
        raise ValidationError(f"{source}: unknown manifest fields {sorted(unknown)}")
    for key in ("id", "task", "language", "paths"):
        if key not in raw:
            raise ValidationError(f"{source}: missing required field {key!r}")
    if not isinstance(raw["id"], str) or not raw["id"]:
        raise ValidationError(f"{source}: id must be a nonempty string")
    task = TaskKind.parse(raw["task"])
    language = _optional_str(raw, "language", source)
    target_language = _optional_str(raw, "target_language", source)
    if task in NEEDS_TARGET_LANGUAGE and not target_language:
        raise ValidationError(f"{source}: task {task.value!r} requires target_language")

    override = raw.get("metric_override", False)
    if not isinstance(override, bool):
        raise ValidationError(f"{source}: metric_override must be a boolean")
    metric = raw.get("metric") or task.default_metric
    if not isinstance(metric, str):
        raise ValidationError(f"{source}: metric must be a string")
    metric = metric.lower()
    if metric != task.default_metric and not override:
        raise ValidationError(
            f"{source}: metric {metric!r} does not match task {task.value!r} "
            f"(expected {task.default_metric!r}; set metric_override to force)"
        )

    paths_raw = raw["paths"]
    if not isinstance(paths_raw, dict):
        raise ValidationError(f"{source}: paths must be a mapping role -> path")
    base = Path(base_dir)
    paths = {}
    for role, p in paths_raw.items():
        if role not in KNOWN_ROLES:
            raise ValidationError(f"{source}: unknown path role {role!r}")
        resolved = Path(p) if Path(p).is_absolute() else (base / p)
        resolved = resolved.resolve()
        if not resolved.is_file():
            raise ValidationError(f"{source}: {role} file not found: {resolved}")
        paths[role] = resolved
    missing = [r for r in REQUIRED_ROLES[task] if r not in paths]
    if missing:
        raise ValidationError(f"{source}: task {task.value!r} needs path roles {missing}")

    score_range = raw.get("score_range", (0.0, 5.0))
    try:
        lo, hi = (float(x) for x in score_range)
    except (TypeError, ValueError):
        raise ValidationError(f"{source}: score_range must be [min, max]") from None
    if not lo < hi:
        raise ValidationError(f"{source}: score_range must satisfy min < max")

    return DatasetManifest(
        id=raw["id"],
        task=task,
        language=language,
        target_language=target_language,
        dialect=_optional_str(raw, "dialect", source),
        paths=paths,
        metric=metric,
        metric_override=override,
        instruction=_optional_str(raw, "instruction", source),
        score_range=(lo, hi),
    )


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path, exc.lineno) from None
    except OSError as exc:
        raise ParseError(str(exc), path) from None
    return parse_manifest(raw, path.parent, source=path)


def dump_manifest(manifest: DatasetManifest, path) -> None:
    Path(path).write_text(json.dumps(manifest.to_dict(), ensure_ascii=False, indent=2) + "\n", encoding="utf-8")


# --- line readers -------------------------------------------------------------

def iter_jsonl(path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", path, lineno) from None
            if not isinstance(obj, dict):
                raise ParseError("expected a JSON object", path, lineno)
            yield lineno, obj


def write_jsonl(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def _field(obj, key, path, lineno, kind=str):
    if key not in obj:
        raise ParseError(f"missing field {key!r}", path, lineno)
    value = obj[key]
    if kind is str:
        if isinstance(value, bool) or not isinstance(value, (str, int)):
            raise ParseError(f"field {key!r} must be a string", path, lineno)
        return str(value)
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ParseError(f"field {key!r} must be a finite number", path, lineno)
        return float(value)
    if kind is list:
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise ParseError(f"field {key!r} must be a list of strings", path, lineno)
        return tuple(value)
    raise TypeError(kind)


def _unique(ids, what, path) -> None:
    seen = set()
    for i in ids:
        if i in seen:
            raise ValidationError(f"{path}: duplicate {what} id {i!r}")
        seen.add(i)


def _nonempty(rows, path):
    if not rows:
        raise EmptyDataset(f"{path}: no records")
    return rows


def read_id_text(path) -> tuple[tuple[str, str], ...]:
    rows = []
    for lineno, obj in iter_jsonl(path):
        text = _field(obj, "text", path, lineno)
        title = obj.get("title")
        if isinstance(title, str) and title:
            text = f"{title} {text}"
        rows.append((_field(obj, "id", path, lineno), text))
    _unique((r[0] for r in rows), "record", path)
    return tuple(_nonempty(rows, path))


def read_qrels(path) -> list[tuple[str, str, int]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError("expected query_id<TAB>doc_id<TAB>relevance", path, lineno)
            try:
                rel = int(parts[2])
            except ValueError:
                raise ParseError(f"relevance {parts[2]!r} is not an integer", path, lineno) from None
            if rel < 0:
                raise ParseError("relevance must be nonnegative", path, lineno)
            rows.append((parts[0], parts[1], rel))
    return rows


def _load_retrieval(m: DatasetManifest) -> RetrievalData:
    documents = read_id_text(m.paths["corpus"])
    queries = read_id_text(m.paths["queries"])
    doc_ids = {d for d, _ in documents}
    query_ids = {q for q, _ in queries}
    qrels = Qrels()
    for q, d, rel in read_qrels(m.paths["qrels"]):
        if q not in query_ids:
            raise DanglingReference(q)
        if d not in doc_ids:
            raise DanglingReference(d)
        if (q, d) in qrels:
            raise ValidationError(f"{m.paths['qrels']}: duplicate judgment for ({q}, {d})")
        qrels[(q, d)] = rel
    if not qrels:
        raise EmptyDataset(f"{m.paths['qrels']}: no judgments")
    for q, rels in qrels.by_query().items():
        if max(rels.values()) < 1:
            raise ValidationError(f"query {q!r} has judgments but none with relevance >= 1")
    return RetrievalData(documents=documents, queries=queries, qrels=qrels, task=m.task)


def _load_reranking(m: DatasetManifest) -> RerankingData:
    path = m.paths["records"]
    items = []
    for lineno, obj in iter_jsonl(path):
        query = _field(obj, "query", path, lineno)
        pos = _field(obj, "positive", path, lineno, list)
        neg = _field(obj, "negative", path, lineno, list)
        if not pos and not neg:
            raise ValidationError(f"{path}:{lineno}: item has no candidates")
        if not pos:
            raise ItemWithoutPositive(f"{path}:{lineno}: item has no positive candidate")
        if not neg:
            raise ValidationError(f"{path}:{lineno}: item has no negative candidate")
        items.append(RerankItem(query, pos, neg))
    return RerankingData(items=tuple(_nonempty(items, path)))


def _load_sts(m: DatasetManifest) -> STSData:
    path = m.paths["pairs"]
    lo, hi = m.score_range
    rows, ids = [], []
    for lineno, obj in iter_jsonl(path):
        ids.append(_field(obj, "id", path, lineno))
        score = _field(obj, "score", path, lineno, float)
        if not lo <= score <= hi:
            raise ValidationError(f"{path}:{lineno}: score {score} outside [{lo}, {hi}]")
        rows.append((_field(obj, "text1", path, lineno), _field(obj, "text2", path, lineno), score))
    _unique(ids, "pair", path)
    return STSData(pairs=tuple(_nonempty(rows, path)), score_range=(lo, hi))


def _read_labelled(path) -> tuple[tuple[str, str], ...]:
    rows, ids = [], []
    for lineno, obj in iter_jsonl(path):
        ids.append(_field(obj, "id", path, lineno))
        rows.append((_field(obj, "text", path, lineno), _field(obj, "label", path, lineno)))
    _unique(ids, "record", path)
    return tuple(_nonempty(rows, path))


def _load_classification(m: DatasetManifest) -> ClassificationData:
    train = _read_labelled(m.paths["train"])
    test = _read_labelled(m.paths["test"])
    known = {label for _, label in train}
    unseen = sorted({label for _, label in test} - known)
    if unseen:
        raise ValidationError(f"{m.paths['test']}: test labels not present in train: {unseen}")
    return ClassificationData(train=train, test=test)


def _load_pair_classification(m: DatasetManifest) -> PairClassificationData:
    path = m.paths["pairs"]
    rows, ids = [], []
    for lineno, obj in iter_jsonl(path):
        ids.append(_field(obj, "id", path, lineno))
        label = obj.get("label")
        if isinstance(label, bool) or label not in (0, 1):
            raise ParseError("label must be 0 or 1", path, lineno)
        rows.append((_field(obj, "text1", path, lineno), _field(obj, "text2", path, lineno), int(label)))
    _unique(ids, "pair", path)
    return PairClassificationData(pairs=tuple(_nonempty(rows, path)))


def _load_clustering(m: DatasetManifest) -> ClusteringData:
    return ClusteringData(items=_read_labelled(m.paths["records"]))


def _load_bitext(m: DatasetManifest) -> BitextData:
    path = m.paths["pairs"]
    rows, ids = [], []
    for lineno, obj in iter_jsonl(path):
        ids.append(_field(obj, "id", path, lineno))
        rows.append((_field(obj, "source", path, lineno), _field(obj, "target", path, lineno)))
    _unique(ids, "pair", path)
    return BitextData(pairs=tuple(_nonempty(rows, path)))


_LOADERS = {
    TaskKind.RETRIEVAL: _load_retrieval,
    TaskKind.CROSSLINGUAL_RETRIEVAL: _load_retrieval,
    TaskKind.RERANKING: _load_reranking,
    TaskKind.STS: _load_sts,
    TaskKind.CLASSIFICATION: _load_classification,
    TaskKind.PAIR_CLASSIFICATION: _load_pair_classification,
    TaskKind.CLUSTERING: _load_clustering,
    TaskKind.BITEXT_MINING: _load_bitext,
}


def load_task_data(manifest: DatasetManifest) -> TaskData:
    data = _LOADERS[manifest.task](manifest)
    logger.info("loaded %s (%s): %s", manifest.id, manifest.task.value, _describe(data))
    return data


def _describe(data) -> str:
    if isinstance(data, RetrievalData):
        return "docs=%d queries=%d qrels=%d" % data.sizes
    if isinstance(data, ClassificationData):
        return f"train={len(data.train)} test={len(data.test)}"
    for attr in ("pairs", "items"):
        if hasattr(data, attr):
            return f"{attr}={len(getattr(data, attr))}"
    return ""

