"""Command-line entry point: ``embench <subcommand>``."""

from __future__ import annotations

import json
import logging
import os
import sys
from pathlib import Path

import click

from . import runner
from .backend.cache import VectorStore, cache_key
from .backend.client import Backend, BackendSpec
from .data import iter_jsonl, read_id_text, write_jsonl
from .dedupe import dedupe_corpus
from .errors import ConfigError, EmbenchError
from .fixtures import fixture_backend_spec
from .mining import TextCorpus, mine_hard_negatives
from .prompts import apply_instruction


def _fail(message: str, code: int) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _backend_spec(backend_id: str, config_path: str | None) -> BackendSpec:
    if config_path:
        config = runner.load_run_config(config_path)
        for spec in config.backends:
            if spec.id == backend_id:
                return spec
        raise ConfigError(f"backend {backend_id!r} is not defined in {config_path}")
    if backend_id == "hash":
        return fixture_backend_spec(id="hash")
    raise ConfigError("pass --config to name a configured backend, or use the built-in 'hash' backend")


def _emit(rows, out: str | None) -> None:
    rows = list(rows)
    if out:
        write_jsonl(out, rows)
    else:
        for row in rows:
            click.echo(json.dumps(row, ensure_ascii=False))


@click.group()
@click.option("-v", "--verbose", count=True, help="Repeat for more log output.")
def main(verbose: int) -> None:
    """Embedding benchmark harness."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@main.command("eval")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
def eval_cmd(config_path: str) -> None:
    """Run every configured backend over every manifest."""
    try:
        config = runner.load_run_config(config_path)
        outcome = runner.run_benchmark(config)
    except ConfigError as exc:
        _fail(str(exc), runner.EXIT_CONFIG)
    click.echo(runner.render_report(outcome.report, "markdown").decode("utf-8"), nl=False)
    sys.exit(outcome.exit_code)


@main.command()
@click.option("--backend", "backend_id", required=True, help="Backend id from the config, or 'hash'.")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--instruction", default=None, help="Template applied to every text before embedding.")
def embed(backend_id, in_path, out_path, config_path, instruction) -> None:
    """Embed a JSONL file of {id, text} into a vector store usable as a precomputed backend."""
    try:
        spec = _backend_spec(backend_id, config_path)
        texts = [t for _, t in read_id_text(in_path)]
        with Backend(spec) as backend:
            vectors = backend.embed_texts(texts, instruction)
        with VectorStore(out_path, spec.dim) as store:
            store.put_many(
                (cache_key(spec.model_name, None, apply_instruction(instruction, t)), v)
                for t, v in zip(texts, vectors)
            )
    except ConfigError as exc:
        _fail(str(exc), runner.EXIT_CONFIG)
    except EmbenchError as exc:
        _fail(str(exc), 1)
    click.echo(f"embedded {len(texts)} texts into {out_path}", err=True)


@main.command("mine-hn")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--pairs", "pairs_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help='JSONL of {"query": text, "positive_id": corpus id}.')
@click.option("--n", "n", required=True, type=click.IntRange(min=1))
@click.option("--skip-top", default=0, type=click.IntRange(min=0))
@click.option("--backend", "backend_id", default="hash")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--instruction", default=None, help="Query-side instruction.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False))
def mine_hn(corpus_path, pairs_path, n, skip_top, backend_id, config_path, instruction, out_path) -> None:
    """Mine hard negatives and write {query, positive, negatives} triples."""
    try:
        spec = _backend_spec(backend_id, config_path)
        with Backend(spec) as backend:
            corpus = TextCorpus.embed(backend, read_id_text(corpus_path))
            rows = []
            for _, obj in iter_jsonl(pairs_path):
                positive = obj.get("positive_id", obj.get("positive"))
                example = mine_hard_negatives(
                    obj["query"], positive, corpus, n, skip_top, backend=backend, instruction=instruction
                )
                rows.append(example.to_json())
    except ConfigError as exc:
        _fail(str(exc), runner.EXIT_CONFIG)
    except (EmbenchError, KeyError) as exc:
        _fail(str(exc), 1)
    _emit(rows, out_path)


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--threshold", default=0.8, show_default=True, type=click.FloatRange(0.0, 1.0, min_open=True))
@click.option("--ngram", default=3, show_default=True, type=click.IntRange(min=1))
@click.option("--kept-out", type=click.Path(dir_okay=False), help="Also write the surviving records here.")
def dedupe(in_path, threshold, ngram, kept_out) -> None:
    """Report near-duplicate clusters in a JSONL file of {id, text}."""
    try:
        docs = read_id_text(in_path)
    except EmbenchError as exc:
        _fail(str(exc), 1)
    result = dedupe_corpus(docs, threshold, ngram)
    if kept_out:
        keep = set(result.kept)
        write_jsonl(kept_out, ({"id": d, "text": t} for d, t in docs if d in keep))
    click.echo(json.dumps(result.to_report(), ensure_ascii=False))


@main.command()
@click.option("--task", "tasks", required=True, multiple=True, help="Task description; repeat to cycle several.")
@click.option("--count", required=True, type=click.IntRange(min=1))
@click.option("--endpoint", required=True, help="Chat-completion URL.")
@click.option("--model", required=True)
@click.option("--adapter", default="generic", type=click.Choice(["generic", "openai"]))
@click.option("--api-key-env", default=None, help="Environment variable holding a bearer token.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--journal", "journal_path", type=click.Path(dir_okay=False),
              help="Progress journal; defaults to OUT.journal.jsonl.")
@click.option("--threshold", default=0.8, show_default=True, type=float)
@click.option("--concurrency", default=4, show_default=True, type=click.IntRange(min=1))
def synthgen(tasks, count, endpoint, model, adapter, api_key_env, out_path, journal_path, threshold, concurrency):
    """Generate synthetic (query, positive, hard negative) triples; rerun to resume."""
    from .synthgen import ChatClient, filter_records, generate_records, write_triples

    headers = {}
    if api_key_env:
        token = os.environ.get(api_key_env)
        if not token:
            _fail(f"environment variable {api_key_env} is not set", runner.EXIT_CONFIG)
        headers["Authorization"] = f"Bearer {token}"
    client = ChatClient(endpoint, model, adapter=adapter, headers=headers)
    journal = journal_path or f"{out_path}.journal.jsonl"
    try:
        records = generate_records(list(tasks), count, client, journal, concurrency)
    except EmbenchError as exc:
        _fail(str(exc), 1)
    finally:
        client.close()
    kept = filter_records(records, threshold)
    write_triples(out_path, kept)
    invalid = sum(1 for r in records if not r.valid)
    click.echo(f"{len(records)} generated, {invalid} invalid, {len(kept)} kept -> {out_path}", err=True)


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--max-tokens", default=1024, show_default=True, type=click.IntRange(min=1))
@click.option("--out", "out_path", type=click.Path(dir_okay=False))
def chunk(in_path, max_tokens, out_path) -> None:
    """Split {id, text} documents into chunks of at most MAX_TOKENS estimated tokens."""
    from .synthgen import chunk_corpus

    try:
        docs = read_id_text(in_path)
    except EmbenchError as exc:
        _fail(str(exc), 1)
    rows = (
        {"source_id": c.source_id, "index": c.index, "text": c.text, "token_estimate": c.token_estimate}
        for doc in docs
        for c in chunk_corpus(doc, max_tokens)
    )
    _emit(rows, out_path)


@main.command()
@click.option("--run", "run_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--format", "fmt", default="md", show_default=True, type=click.Choice(["md", "markdown", "json"]))
def report(run_dir, fmt) -> None:
    """Rebuild the leaderboard from a run directory's per-dataset results."""
    try:
        rep = runner.collect_report(Path(run_dir))
    except ConfigError as exc:
        _fail(str(exc), runner.EXIT_CONFIG)
    click.echo(runner.render_report(rep, fmt).decode("utf-8"), nl=False)


if __name__ == "__main__":
    main()
