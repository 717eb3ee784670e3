import json

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from embench.backend.client import RetryPolicy
from embench.data import load_manifest, load_task_data
from embench.errors import BackendUnavailable, EmptyTask, GenerationFailed
from embench.synthgen import (
    ChatClient,
    Chunk,
    build_generation_prompt,
    chunk_corpus,
    filter_records,
    generate_eval_queries,
    generate_records,
    parse_record,
    split_sentences,
    write_eval_set,
    write_triples,
)


class ScriptedClient:
    """Returns canned replies in order (the last one repeats)."""

    def __init__(self, *replies):
        self.replies = list(replies)
        self.prompts = []

    def complete(self, prompt):
        self.prompts.append(prompt)
        return self.replies[min(len(self.prompts), len(self.replies)) - 1]


def record_json(q="what is x", p="x is a thing", n="y is another thing"):
    return json.dumps({"user_query": q, "positive": p, "hard_negative": n})


# --- prompt ---------------------------------------------------------------------------

def test_generation_prompt():
    prompt = build_generation_prompt("X")
    assert "You have been assigned a retrieval task: X" in prompt
    assert "in JSON format" in prompt
    key_lines = [line.strip() for line in prompt.splitlines() if line.strip().startswith("hard_negative:")]
    assert len(key_lines) == 1
    for key in ("user_query:", "positive:"):
        assert sum(1 for line in prompt.splitlines() if line.strip().startswith(key)) == 1
    assert "The hard_negative contains some useful information" in prompt


@pytest.mark.parametrize("task", ["", "   \n"])
def test_empty_task(task):
    with pytest.raises(EmptyTask):
        build_generation_prompt(task)


# --- parsing --------------------------------------------------------------------------

def test_parse_valid_and_fenced():
    ok = parse_record(record_json(), "t")
    assert ok.valid and ok.user_query == "what is x" and ok.reason == ""
    fenced = parse_record("Sure! Here it is:\n```json\n" + record_json() + "\n```\nHope it helps {", "t")
    assert fenced.valid and fenced.hard_negative == "y is another thing"
    assert fenced.to_triple() == {
        "task": "t", "query": "what is x", "positive": "x is a thing", "negatives": ["y is another thing"],
    }


@pytest.mark.parametrize(
    "raw, reason",
    [
        (json.dumps({"user_query": "a", "positive": "b"}), "missing key"),
        (record_json(p="same", n="same"), "degenerate pair"),
        (record_json(q="same", p="same"), "degenerate pair"),
        (record_json(n="  "), "empty field"),
        (json.dumps({"user_query": 1, "positive": "b", "hard_negative": "c"}), "non-string field"),
        ("no braces here", "no json object"),
        ("{not json", "no json object"),
        ("[1, 2]", "no json object"),
    ],
)
def test_parse_failures(raw, reason):
    rec = parse_record(raw, "t")
    assert not rec.valid and rec.reason == reason
    assert rec.raw_response == raw


@given(st.text(max_size=200))
def test_parse_never_raises(raw):
    rec = parse_record(raw, "t")
    if rec.valid:
        assert len({rec.user_query, rec.positive, rec.hard_negative}) == 3


# --- filtering --------------------------------------------------------------------------

def test_filter_records():
    a = parse_record(record_json(q="same query about cats and dogs"), "t")
    b = parse_record(record_json(q="same query about cats and dogs", p="other"), "t")
    c = parse_record(record_json(q="entirely different words in this one"), "t")
    bad = parse_record("nope", "t")
    assert filter_records([a, b]) == [a]
    assert filter_records([a, c]) == [a, c]
    assert filter_records([bad, c, bad]) == [c]
    assert all(r.valid for r in filter_records([a, b, c, bad]))


# --- generation with journal ------------------------------------------------------

def test_generate_records_and_resume(tmp_path):
    journal = tmp_path / "j.jsonl"
    client = ScriptedClient(record_json())
    records = generate_records(["task A", "task B"], 5, client, journal, max_concurrency=3)
    assert len(client.prompts) == 5
    assert [r.task_description for r in records] == ["task A", "task B", "task A", "task B", "task A"]
    assert sum(1 for _ in open(journal)) == 5

    again = ScriptedClient(record_json())
    assert generate_records(["task A", "task B"], 5, again, journal) == records
    assert again.prompts == []


def test_resume_after_interruption(tmp_path):
    journal = tmp_path / "j.jsonl"

    class Dies(ScriptedClient):
        def complete(self, prompt):
            if len(self.prompts) == 3:
                raise BackendUnavailable("gone")
            return super().complete(prompt)

    with pytest.raises(BackendUnavailable):
        generate_records(["t"], 6, Dies(record_json()), journal, max_concurrency=1)
    with open(journal, "a") as fh:
        fh.write('{"index": 9, "ta')  # torn write
    client = ScriptedClient(record_json(q="later"))
    records = generate_records(["t"], 6, client, journal, max_concurrency=1)
    assert len(client.prompts) == 3
    assert [r.user_query for r in records] == ["what is x"] * 3 + ["later"] * 3


def test_write_triples(tmp_path):
    out = tmp_path / "triples.jsonl"
    write_triples(out, [parse_record(record_json(), "t")])
    row = json.loads(out.read_text())
    assert set(row) == {"task", "query", "positive", "negatives"}


# --- chat client ----------------------------------------------------------------------

def test_chat_client_generic_and_openai():
    seen = []

    def handler(request):
        body = json.loads(request.content)
        seen.append((body, request.headers.get("authorization")))
        if request.url.path == "/openai":
            return httpx.Response(200, json={"choices": [{"message": {"content": "hi"}}]})
        return httpx.Response(200, json={"content": "hello"})

    transport = httpx.MockTransport(handler)
    generic = ChatClient("http://chat/gen", "m1", transport=transport, headers={"Authorization": "Bearer k"})
    assert generic.complete("ping") == "hello"
    openai = ChatClient("http://chat/openai", "m2", adapter="openai", temperature=0.0, transport=transport)
    assert openai.complete("ping") == "hi"
    assert seen[0] == ({"model": "m1", "messages": [{"role": "user", "content": "ping"}], "temperature": 0.7}, "Bearer k")
    assert seen[1][0]["temperature"] == 0.0
    with pytest.raises(ValueError):
        ChatClient("http://chat", "m", adapter="nope")


def test_chat_client_retries_then_fails():
    calls = []
    transport = httpx.MockTransport(lambda r: calls.append(r) or httpx.Response(503))
    client = ChatClient("http://chat", "m", transport=transport, retry=RetryPolicy(3, 1), sleep=lambda s: None)
    with pytest.raises(BackendUnavailable):
        client.complete("x")
    assert len(calls) == 3


# --- chunking ---------------------------------------------------------------------------

def sentences(n_tokens, sentence_chars=40):
    body = "w" * (sentence_chars - 2) + ". "
    return body * (n_tokens * 4 // sentence_chars)


def test_chunk_examples():
    short = chunk_corpus(("d", sentences(100)))
    assert len(short) == 1 and short[0].chunk_id == "d#0"
    chunks = chunk_corpus(("d", sentences(2500)))
    assert len(chunks) == 3
    assert all(1000 <= c.token_estimate <= 1024 for c in chunks[:2])
    assert all(c.token_estimate <= 1024 for c in chunks)
    assert chunk_corpus(("d", "")) == []
    assert chunk_corpus(("d", "  \n ")) == []


def test_arabic_boundaries_and_hard_split():
    text = "جملة أولى؟ جملة ثانية، ثالثة۔ رابعة"
    assert split_sentences(text) == ["جملة أولى؟ ", "جملة ثانية، ", "ثالثة۔ ", "رابعة"]
    long = chunk_corpus(("x", "a" * 10000), max_tokens=1024)
    assert [len(c.text) for c in long] == [4096, 4096, 1808]


@given(st.text(alphabet="ab .!?\n؟،", max_size=400), st.integers(1, 20))
def test_chunks_reconstruct_source(text, max_tokens):
    chunks = chunk_corpus(("s", text), max_tokens)
    joined = "".join(c.text for c in chunks)
    # only whitespace-only pieces can be dropped
    assert joined.split() == text.split()
    assert [c.index for c in chunks] == list(range(len(chunks)))
    assert all(c.token_estimate <= max_tokens for c in chunks)


# --- evaluation queries -------------------------------------------------------------------

CHUNK = Chunk("doc", 0, "A passage about date palms.", 7)


def test_generate_eval_queries():
    five = ScriptedClient(json.dumps(["q1", "q2", "q3", "q4", "q5"]))
    out = generate_eval_queries(CHUNK, five)
    assert out.pairs == [(f"q{i}", "doc#0") for i in range(1, 6)]
    assert not out.short
    assert "keyword" in five.prompts[0] and CHUNK.text in five.prompts[0]

    dupes = ScriptedClient("Here you go: " + json.dumps(["q1", "q1 ", "q2", " q2", "q3"]))
    out = generate_eval_queries(CHUNK, dupes)
    assert out.queries == ["q1", "q2", "q3"] and out.short

    dup_two = ScriptedClient(json.dumps(["a", "b", "c", "d", "a"]))
    assert len(generate_eval_queries(CHUNK, dup_two).pairs) == 4


def test_generate_eval_queries_retries():
    flaky = ScriptedClient("not json", json.dumps(["a", "b", "c", "d", "e"]))
    assert len(generate_eval_queries(CHUNK, flaky).queries) == 5
    assert len(flaky.prompts) == 2
    broken = ScriptedClient("still not json")
    with pytest.raises(GenerationFailed):
        generate_eval_queries(CHUNK, broken, max_attempts=3)
    assert len(broken.prompts) == 3


def test_write_eval_set_loads_as_retrieval(tmp_path):
    chunks = chunk_corpus(("src", "First part. " * 3)) + [Chunk("other", 0, "Second document text.", 6)]
    generated = [
        generate_eval_queries(chunks[0], ScriptedClient(json.dumps(["alpha one two", "beta three four"]))),
        generate_eval_queries(chunks[1], ScriptedClient(json.dumps(["alpha one two", "gamma five six"]))),
    ]
    path = write_eval_set(tmp_path / "bench", chunks, generated)
    data = load_task_data(load_manifest(path))
    assert [t for _, t in data.queries] == ["alpha one two", "beta three four", "gamma five six"]
    assert [(q, d, r) for (q, d), r in sorted(data.qrels.items())] == [
        ("q0", "src#0", 1), ("q1", "src#0", 1), ("q3", "other#0", 1),
    ]
