"""Benchmark orchestration: run configs, resumable execution, aggregation and reports."""

from __future__ import annotations

import glob
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Callable, Sequence

import httpx
import yaml

from .backend.client import Backend, BackendSpec
from .backend.ledger import UsageLedger, ledger_summary
from .data import load_manifest, load_task_data
from .errors import ConfigError, EmbenchError, UnknownFormat
from .evaluators import EVALUATORS, EvalResult
from .prompts import resolve_instruction
from .types import TASK_ABBREVIATIONS, DatasetManifest, TaskKind

logger = logging.getLogger(__name__)

REPORT_FORMATS = ("json", "markdown")
EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 2, 3

_CONFIG_FIELDS = {
    "backends", "manifests", "seed", "output_dir", "report_formats",
    "instruction_overrides", "timing", "bitext_both_directions", "workers",
}


@dataclass(frozen=True)
class RunConfig:
    backends: tuple[BackendSpec, ...]
    manifests: tuple[Path, ...]
    output_dir: Path
    seed: int = 42
    report_formats: tuple[str, ...] = REPORT_FORMATS
    instruction_overrides: dict[str, str] = field(default_factory=dict)
    # "off" pins every clock reading to zero so reports are byte-stable
    timing: str = "wall"
    bitext_both_directions: bool = False
    workers: int = 1

    def __post_init__(self):
        if not self.backends:
            raise ConfigError("run config needs at least one backend")
        if not self.manifests:
            raise ConfigError("run config needs at least one manifest")
        ids = [b.id for b in self.backends]
        if len(set(ids)) != len(ids):
            raise ConfigError("backend ids must be unique")
        bad = set(self.report_formats) - set(REPORT_FORMATS)
        if bad:
            raise ConfigError(f"unknown report formats {sorted(bad)}")
        if self.timing not in ("wall", "off"):
            raise ConfigError("timing must be 'wall' or 'off'")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path | str = ".") -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("run config must be a mapping")
        unknown = set(raw) - _CONFIG_FIELDS
        if unknown:
            raise ConfigError(f"unknown run config fields {sorted(unknown)}")
        base = Path(base_dir)
        backends = raw.get("backends") or []
        if not isinstance(backends, list):
            raise ConfigError("backends must be a list")
        manifests = raw.get("manifests") or []
        if isinstance(manifests, str):
            manifests = [manifests]
        overrides = raw.get("instruction_overrides") or {}
        if not isinstance(overrides, dict) or not all(isinstance(v, str) for v in overrides.values()):
            raise ConfigError("instruction_overrides must map task or dataset ids to strings")
        formats = raw.get("report_formats") or list(REPORT_FORMATS)
        output_dir = Path(raw.get("output_dir") or "runs")
        try:
            return cls(
                backends=tuple(BackendSpec.from_dict(b, base) for b in backends),
                manifests=expand_manifests(manifests, base),
                output_dir=output_dir if output_dir.is_absolute() else base / output_dir,
                seed=int(raw.get("seed", 42)),
                report_formats=tuple("markdown" if f == "md" else f for f in formats),
                instruction_overrides=dict(overrides),
                timing=raw.get("timing", "wall"),
                bitext_both_directions=bool(raw.get("bitext_both_directions", False)),
                workers=int(raw.get("workers", 1)),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None


def expand_manifests(patterns: Sequence[str], base_dir: Path) -> tuple[Path, ...]:
    found: list[Path] = []
    for pattern in patterns:
        p = pattern if os.path.isabs(pattern) else str(base_dir / pattern)
        matches = sorted(glob.glob(p, recursive=True)) if glob.has_magic(p) else [p]
        if not matches:
            raise ConfigError(f"manifest pattern {pattern!r} matched nothing")
        for m in matches:
            path = Path(m).resolve()
            if not path.is_file():
                raise ConfigError(f"manifest {m} does not exist")
            if path not in found:
                found.append(path)
    return tuple(found)


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read run config {path}: {exc}") from None
    try:
        raw = yaml.safe_load(text) if path.suffix in (".yaml", ".yml") else json.loads(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: malformed run config: {exc}") from None
    return RunConfig.from_dict(raw, path.parent)


# --- aggregation ------------------------------------------------------------------

def _mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values)


def aggregate(results: Sequence[EvalResult]) -> tuple[dict[str, dict[str, float]], dict[str, float]]:
    """Two-level macro mean: datasets within a task, then tasks within a backend."""
    buckets: dict[str, dict[str, list[float]]] = {}
    for r in results:
        buckets.setdefault(r.backend_id, {}).setdefault(r.task.value, []).append(r.main_score.value)
    per_task = {
        b: {t: _mean(sorted(v)) for t, v in sorted(tasks.items())} for b, tasks in sorted(buckets.items())
    }
    overall = {b: _mean(sorted(tasks.values())) for b, tasks in per_task.items()}
    return per_task, overall


def round_half_up(value: float, places: int = 2, scale: int = 0) -> Decimal:
    # repr gives the shortest decimal that round-trips, so 0.82495 rounds as written
    exact = Decimal(repr(float(value))).scaleb(scale)
    return exact.quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP)


def reported(value: float) -> str:
    """Score rendered x100 with two decimals, rounding half up."""
    return str(round_half_up(value, 2, scale=2))


# --- report -------------------------------------------------------------------------

@dataclass
class BenchmarkReport:
    per_dataset: list[EvalResult]
    per_task: dict[str, dict[str, float]]
    overall: dict[str, float]
    cost_latency: dict[str, dict[str, float]]
    errors: list[dict] = field(default_factory=list)

    @classmethod
    def build(cls, results: Sequence[EvalResult], errors: Sequence[dict] = ()) -> "BenchmarkReport":
        results = sorted(results, key=lambda r: (r.backend_id, r.dataset_id))
        per_task, overall = aggregate(results)
        ledgers: dict[str, UsageLedger] = {}
        for r in results:
            snap = r.ledger_snapshot or UsageLedger()
            prev = ledgers.get(r.backend_id)
            ledgers[r.backend_id] = snap if prev is None else prev.merge(snap)
        for e in errors:
            ledgers.setdefault(e["backend_id"], UsageLedger())
        return cls(
            per_dataset=results,
            per_task=per_task,
            overall=overall,
            cost_latency={b: ledger_summary(ledgers[b]) for b in sorted(ledgers)},
            errors=sorted(errors, key=lambda e: (e["backend_id"], e["dataset_id"])),
        )

    def to_dict(self) -> dict:
        return {
            "per_dataset": [r.to_dict() for r in self.per_dataset],
            "per_task": self.per_task,
            "overall": self.overall,
            "cost_latency": self.cost_latency,
            "errors": self.errors,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "BenchmarkReport":
        return cls(
            per_dataset=[EvalResult.from_dict(r) for r in d["per_dataset"]],
            per_task={b: dict(t) for b, t in d["per_task"].items()},
            overall=dict(d["overall"]),
            cost_latency={b: dict(s) for b, s in d["cost_latency"].items()},
            errors=list(d.get("errors", [])),
        )

    @classmethod
    def from_json(cls, text: str) -> "BenchmarkReport":
        return cls.from_dict(json.loads(text))

    @property
    def backends(self) -> list[str]:
        return sorted(set(self.cost_latency) | set(self.overall))


def _render_markdown(report: BenchmarkReport) -> str:
    present = {TaskKind.parse(t) for tasks in report.per_task.values() for t in tasks}
    present |= {TaskKind.parse(e["task"]) for e in report.errors if e.get("task")}
    columns = [k for k in TASK_ABBREVIATIONS if k in present]
    failed: dict[str, list[dict]] = {}
    for e in report.errors:
        failed.setdefault(e["backend_id"], []).append(e)

    def order(b):
        score = report.overall.get(b)
        return (score is None, -(score or 0.0), b)

    header = ["Backend", *(TASK_ABBREVIATIONS[k] for k in columns), "Avg", "Cost", "p50 latency (ms)"]
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join(["---"] + [":---:"] * (len(header) - 1)) + "|"]
    notes = []
    for b in sorted(report.backends, key=order):
        name = b
        if b in failed:
            notes.append(failed[b])
            name = f"{b} [{len(notes)}]"
        tasks = report.per_task.get(b, {})
        cells = [reported(tasks[k.value]) if k.value in tasks else "-" for k in columns]
        avg = reported(report.overall[b]) if b in report.overall else "-"
        summary = report.cost_latency.get(b, {})
        cost = str(round_half_up(summary.get("cost_estimate", 0.0), 4))
        p50 = str(round_half_up(summary.get("p50_ms", 0.0), 1))
        lines.append("| " + " | ".join([name, *cells, avg, cost, p50]) + " |")
    if notes:
        lines.append("")
        for i, errs in enumerate(notes, start=1):
            listed = ", ".join(f"{e['dataset_id']} failed ({e['error']})" for e in errs)
            lines.append(f"[{i}] {listed}")
    return "\n".join(lines) + "\n"


def render_report(report: BenchmarkReport, fmt: str) -> bytes:
    if fmt == "json":
        return report.to_json().encode("utf-8")
    if fmt in ("markdown", "md"):
        return _render_markdown(report).encode("utf-8")
    raise UnknownFormat(f"unknown report format {fmt!r}")


# --- execution ----------------------------------------------------------------------

def result_path(output_dir: Path, backend_id: str, dataset_id: str, error: bool = False) -> Path:
    suffix = ".error.json" if error else ".json"
    return Path(output_dir) / "results" / backend_id / f"{dataset_id}{suffix}"


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


@dataclass
class RunOutcome:
    report: BenchmarkReport
    exit_code: int
    backend_calls: int = 0


def evaluate_dataset(
    manifest: DatasetManifest,
    backend,
    *,
    seed: int,
    overrides: dict[str, str] | None = None,
    clock: Callable[[], float] = time.perf_counter,
    both_directions: bool = False,
    workers: int = 1,
) -> EvalResult:
    data = load_task_data(manifest)
    result = EVALUATORS[manifest.task](
        data,
        backend,
        resolve_instruction(manifest, overrides or {}),
        dataset_id=manifest.id,
        metric=manifest.metric,
        seed=seed,
        clock=clock,
        both_directions=both_directions,
        workers=workers,
    )
    result.backend_id = getattr(getattr(backend, "spec", None), "id", "")
    result.language = manifest.language
    result.target_language = manifest.target_language
    return result


def run_benchmark(
    config: RunConfig,
    *,
    transport: httpx.BaseTransport | None = None,
    sleep: Callable[[float], None] = time.sleep,
    write_reports: bool = True,
) -> RunOutcome:
    """Evaluate every (backend, manifest) pair, reusing result files already on disk."""
    manifests = []
    for path in config.manifests:
        try:
            manifests.append(load_manifest(path))
        except EmbenchError as exc:
            raise ConfigError(f"invalid manifest {path}: {exc}") from None
    ids = [m.id for m in manifests]
    if len(set(ids)) != len(ids):
        raise ConfigError("dataset ids must be unique across manifests")

    clock = time.perf_counter if config.timing == "wall" else (lambda: 0.0)
    results: list[EvalResult] = []
    errors: list[dict] = []
    calls = 0
    for spec in config.backends:
        backend = None
        try:
            for manifest in manifests:
                done = result_path(config.output_dir, spec.id, manifest.id)
                if done.exists():
                    results.append(EvalResult.from_dict(json.loads(done.read_text(encoding="utf-8"))))
                    continue
                failure = result_path(config.output_dir, spec.id, manifest.id, error=True)
                try:
                    if backend is None:
                        # built lazily so a fully resumed run never touches the producer
                        backend = Backend(spec, transport=transport, clock=clock, sleep=sleep)
                    result = evaluate_dataset(
                        manifest, backend, seed=config.seed, overrides=config.instruction_overrides,
                        clock=clock, both_directions=config.bitext_both_directions, workers=config.workers,
                    )
                except ConfigError:
                    raise
                except (EmbenchError, ValueError, KeyError, OSError, httpx.HTTPError) as exc:
                    logger.error("%s / %s failed: %s", spec.id, manifest.id, exc)
                    entry = {
                        "backend_id": spec.id,
                        "dataset_id": manifest.id,
                        "task": manifest.task.value,
                        "error": type(exc).__name__,
                        "message": str(exc),
                    }
                    _write_atomic(failure, _dump(entry))
                    errors.append(entry)
                    continue
                _write_atomic(done, _dump(result.to_dict()))
                failure.unlink(missing_ok=True)
                results.append(result)
                logger.info("%s / %s: %s = %.6f", spec.id, manifest.id, result.main_score.name, result.main_score.value)
        finally:
            if backend is not None:
                calls += backend.ledger.requests
                backend.close()

    report = BenchmarkReport.build(results, errors)
    if write_reports:
        write_reports_to(report, config.output_dir, config.report_formats)
    return RunOutcome(report, EXIT_PARTIAL if errors else EXIT_OK, calls)


def write_reports_to(report: BenchmarkReport, output_dir, formats=REPORT_FORMATS) -> list[Path]:
    out = []
    for fmt in formats:
        path = Path(output_dir) / ("report.json" if fmt == "json" else "report.md")
        _write_atomic(path, render_report(report, fmt).decode("utf-8"))
        out.append(path)
    return out


def collect_report(output_dir) -> BenchmarkReport:
    """Rebuild a report from the per-dataset files of a finished or partial run."""
    root = Path(output_dir) / "results"
    if not root.is_dir():
        raise ConfigError(f"{output_dir} holds no results directory")
    results, errors = [], []
    for path in sorted(root.glob("*/*.json")):
        payload = json.loads(path.read_text(encoding="utf-8"))
        if path.name.endswith(".error.json"):
            if not result_path(output_dir, payload["backend_id"], payload["dataset_id"]).exists():
                errors.append(payload)
        else:
            results.append(EvalResult.from_dict(payload))
    return BenchmarkReport.build(results, errors)
