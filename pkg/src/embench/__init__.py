"""Embedding benchmark harness: datasets, backends, evaluators and reports."""

from .backend import Backend, BackendSpec, UsageLedger, VectorStore
from .data import load_manifest, load_task_data
from .evaluators import EVALUATORS, EvalResult
from .metrics import MetricValue
from .prompts import apply_instruction, default_instruction
from .runner import BenchmarkReport, RunConfig, aggregate, load_run_config, render_report, run_benchmark
from .types import DatasetManifest, EmbeddingVector, TaskKind

__version__ = "0.1.0"

__all__ = [
    "EVALUATORS", "Backend", "BackendSpec", "BenchmarkReport", "DatasetManifest", "EmbeddingVector",
    "EvalResult", "MetricValue", "RunConfig", "TaskKind", "UsageLedger", "VectorStore", "aggregate",
    "apply_instruction", "default_instruction", "load_manifest", "load_run_config", "load_task_data",
    "render_report", "run_benchmark",
]
