"""Synthetic retrieval triples and chunk-grounded evaluation queries from a chat model."""

from __future__ import annotations

import json
import logging
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

import httpx

from .backend.client import RetryPolicy, post_json
from .backend.ledger import estimate_tokens
from .data import write_jsonl
from .dedupe import dedupe_corpus
from .errors import BackendProtocolError, EmptyTask, GenerationFailed

logger = logging.getLogger(__name__)

CHUNK_TOKENS = 1024
CHARS_PER_TOKEN = 4
RECORD_KEYS = ("user_query", "positive", "hard_negative")
DEFAULT_QUERY_STYLES = ("keyword", "natural question", "paraphrase", "long-form", "colloquial")

GENERATION_TEMPLATE = """\
You have been assigned a retrieval task: {task}
Your mission is to write one text retrieval example for this task in JSON format.
The JSON object must contain the following keys:
    user_query: a string, a query specified by the retrieval task.
    positive: a string, a relevant document for the user query.
    hard_negative: a string, a document closely related to the query.
Please adhere to the following guidelines:
The user_query should be paragraph-based, understandable with some effort or ambiguity, \
and diverse in topic. The hard_negative contains some useful information, but it should be \
less useful or comprehensive than the positive."""

QUERY_TEMPLATE = """\
Read the passage below and write {count} different search queries that the passage answers.
Write exactly one query in each of these styles: {styles}.
Reply with a JSON array of {count} strings and nothing else.

Passage:
{passage}"""


# --- chat transport -------------------------------------------------------------------

def _generic_chat_response(body: dict) -> str:
    return body["content"]


def _openai_chat_response(body: dict) -> str:
    return body["choices"][0]["message"]["content"]


CHAT_ADAPTERS = {"generic": _generic_chat_response, "openai": _openai_chat_response}


class ChatClient:
    """Minimal chat-completion client: POST {model, messages, temperature} -> {content}."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        *,
        temperature: float = 0.7,
        adapter: str = "generic",
        retry: RetryPolicy = RetryPolicy(),
        headers: dict | None = None,
        transport: httpx.BaseTransport | None = None,
        timeout_s: float = 120.0,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if adapter not in CHAT_ADAPTERS:
            raise ValueError(f"unknown chat adapter {adapter!r}")
        self.endpoint = endpoint
        self.model = model
        self.temperature = temperature
        self.adapter = adapter
        self.retry = retry
        self.headers = headers or {}
        self.sleep = sleep
        self._client = httpx.Client(transport=transport, timeout=timeout_s)

    def complete(self, prompt: str) -> str:
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
        }
        body = post_json(self._client, self.endpoint, payload, self.retry, self.headers, self.sleep)
        try:
            content = CHAT_ADAPTERS[self.adapter](body)
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendProtocolError(f"malformed chat response: {exc!r}") from None
        if not isinstance(content, str):
            raise BackendProtocolError("chat response content is not a string")
        return content

    def close(self):
        self._client.close()


# --- triples ------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticRecord:
    task_description: str
    user_query: str
    positive: str
    hard_negative: str
    raw_response: str
    valid: bool
    reason: str = ""

    def to_triple(self) -> dict:
        return {
            "task": self.task_description,
            "query": self.user_query,
            "positive": self.positive,
            "negatives": [self.hard_negative],
        }


def build_generation_prompt(task_description: str) -> str:
    if not task_description or not task_description.strip():
        raise EmptyTask("task description is empty")
    return GENERATION_TEMPLATE.format(task=task_description.strip())


def first_json(raw: str, opener: str):
    """First JSON value starting with ``opener`` found anywhere in ``raw``."""
    decoder = json.JSONDecoder()
    want = dict if opener == "{" else list
    start = raw.find(opener)
    while start != -1:
        try:
            value, _ = decoder.raw_decode(raw, start)
        except json.JSONDecodeError:
            pass
        else:
            if isinstance(value, want):
                return value
        start = raw.find(opener, start + 1)
    return None


def parse_record(raw: str, task: str) -> SyntheticRecord:
    """Never raises: failures come back as ``valid=False`` with a reason."""

    def invalid(reason, fields=None):
        fields = fields or {}
        return SyntheticRecord(
            task, fields.get("user_query", ""), fields.get("positive", ""), fields.get("hard_negative", ""),
            raw, False, reason,
        )

    obj = first_json(raw if isinstance(raw, str) else "", "{")
    if obj is None:
        return invalid("no json object")
    if any(k not in obj for k in RECORD_KEYS):
        return invalid("missing key")
    if not all(isinstance(obj[k], str) for k in RECORD_KEYS):
        return invalid("non-string field")
    fields = {k: obj[k].strip() for k in RECORD_KEYS}
    if not all(fields.values()):
        return invalid("empty field", fields)
    if len(set(fields.values())) < 3:
        return invalid("degenerate pair", fields)
    return SyntheticRecord(task, fields["user_query"], fields["positive"], fields["hard_negative"], raw, True)


def filter_records(records: Sequence[SyntheticRecord], threshold: float = 0.8) -> list[SyntheticRecord]:
    """Valid records whose query is not a near-duplicate of an earlier valid query."""
    valid = [r for r in records if r.valid]
    width = len(str(len(valid)))
    docs = [(f"{i:0{width}d}", r.user_query) for i, r in enumerate(valid)]
    kept = set(dedupe_corpus(docs, threshold).kept)
    return [r for (doc_id, _), r in zip(docs, valid) if doc_id in kept]


def _read_journal(path: Path) -> dict[int, dict]:
    done = {}
    if not path.exists():
        return done
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            try:
                entry = json.loads(line)
                done[int(entry["index"])] = entry
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                # a torn final line from an interrupted run; that call is simply redone
                continue
    return done


def generate_records(
    tasks: Sequence[str],
    count: int,
    client,
    journal_path,
    max_concurrency: int = 4,
) -> list[SyntheticRecord]:
    """Issue ``count`` generation calls, cycling through ``tasks``.

    Every response is appended to a JSONL journal before it is used, so a
    rerun with the same journal only issues the calls that are missing.
    """
    if not tasks:
        raise EmptyTask("no task descriptions given")
    prompts = [build_generation_prompt(t) for t in tasks]
    journal_path = Path(journal_path)
    journal_path.parent.mkdir(parents=True, exist_ok=True)
    done = _read_journal(journal_path)
    todo = [i for i in range(count) if i not in done]
    lock = threading.Lock()

    with open(journal_path, "a", encoding="utf-8") as journal:
        def run(i):
            raw = client.complete(prompts[i % len(tasks)])
            entry = {"index": i, "task": tasks[i % len(tasks)], "raw": raw}
            with lock:
                journal.write(json.dumps(entry, ensure_ascii=False) + "\n")
                journal.flush()
                done[i] = entry

        with ThreadPoolExecutor(max_workers=max(1, max_concurrency)) as pool:
            list(pool.map(run, todo))

    return [parse_record(done[i]["raw"], done[i]["task"]) for i in range(count)]


def write_triples(path, records: Sequence[SyntheticRecord]) -> None:
    write_jsonl(path, (r.to_triple() for r in records))


# --- domain benchmark construction ----------------------------------------------------------

@dataclass(frozen=True)
class Chunk:
    source_id: str
    index: int
    text: str
    token_estimate: int

    @property
    def chunk_id(self) -> str:
        return f"{self.source_id}#{self.index}"


_PIECE_RE = re.compile(r"[^.!?؟۔،\n]*(?:[.!?؟۔،\n]+\s*|$)")


def split_sentences(text: str) -> list[str]:
    """Consecutive pieces ending at sentence punctuation; their concatenation is ``text``."""
    return [m.group(0) for m in _PIECE_RE.finditer(text) if m.group(0)]


def chunk_corpus(doc: tuple[str, str], max_tokens: int = CHUNK_TOKENS) -> list[Chunk]:
    source_id, text = doc
    budget = max_tokens * CHARS_PER_TOKEN
    pieces: list[str] = []
    current = ""
    for piece in split_sentences(text):
        if len(current) + len(piece) <= budget:
            current += piece
            continue
        if current:
            pieces.append(current)
            current = ""
        while len(piece) > budget:
            pieces.append(piece[:budget])
            piece = piece[budget:]
        current = piece
    if current:
        pieces.append(current)
    chunks = []
    for piece in pieces:
        if piece.strip():
            chunks.append(Chunk(source_id, len(chunks), piece, estimate_tokens(piece)))
    return chunks


@dataclass(frozen=True)
class GeneratedQueries:
    chunk_id: str
    queries: list[str]
    short: bool

    @property
    def pairs(self) -> list[tuple[str, str]]:
        return [(q, self.chunk_id) for q in self.queries]


def _query_styles(count: int, styles: Sequence[str]) -> list[str]:
    return [styles[i % len(styles)] for i in range(count)]


def generate_eval_queries(
    chunk: Chunk,
    client,
    styles: int = 5,
    style_names: Sequence[str] = DEFAULT_QUERY_STYLES,
    max_attempts: int = 3,
) -> GeneratedQueries:
    prompt = QUERY_TEMPLATE.format(
        count=styles, styles=", ".join(_query_styles(styles, style_names)), passage=chunk.text
    )
    for attempt in range(1, max_attempts + 1):
        reply = client.complete(prompt)
        parsed = first_json(reply, "[")
        if parsed is not None and all(isinstance(q, str) for q in parsed):
            break
        logger.info("chunk %s: unparseable query list (attempt %d)", chunk.chunk_id, attempt)
    else:
        raise GenerationFailed(f"no JSON string array for chunk {chunk.chunk_id} after {max_attempts} attempts")
    seen, queries = set(), []
    for q in parsed:
        norm = " ".join(q.split())
        if norm and norm not in seen:
            seen.add(norm)
            queries.append(norm)
    short = len(queries) < styles
    if short:
        logger.warning("chunk %s: %d of %d queries after dedup", chunk.chunk_id, len(queries), styles)
    return GeneratedQueries(chunk.chunk_id, queries, short)


def write_eval_set(out_dir, chunks: Sequence[Chunk], generated: Sequence[GeneratedQueries], threshold: float = 0.8):
    """Write corpus/queries/qrels files plus a retrieval manifest; returns the manifest path.

    Near-duplicate queries across the whole set are dropped first; each kept
    query is relevant (grade 1) to exactly its source chunk.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pairs = [p for g in generated for p in g.pairs]
    width = len(str(len(pairs)))
    ids = [f"q{i:0{width}d}" for i in range(len(pairs))]
    kept = set(dedupe_corpus(list(zip(ids, (q for q, _ in pairs))), threshold).kept) if pairs else set()
    write_jsonl(out / "corpus.jsonl", ({"id": c.chunk_id, "text": c.text} for c in chunks))
    rows = [(qid, q, cid) for qid, (q, cid) in zip(ids, pairs) if qid in kept]
    write_jsonl(out / "queries.jsonl", ({"id": qid, "text": q} for qid, q, _ in rows))
    with open(out / "qrels.tsv", "w", encoding="utf-8") as fh:
        for qid, _, cid in rows:
            fh.write(f"{qid}\t{cid}\t1\n")
    manifest = {
        "id": out.name,
        "task": "retrieval",
        "language": "ar",
        "paths": {"corpus": "corpus.jsonl", "queries": "queries.jsonl", "qrels": "qrels.tsv"},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return out / "manifest.json"


def record_to_dict(record: SyntheticRecord) -> dict:
    return asdict(record)
