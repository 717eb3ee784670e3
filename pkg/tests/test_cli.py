import json

import httpx
import pytest
from click.testing import CliRunner

from embench import cli, synthgen
from embench.backend.cache import VectorStore, cache_key
from embench.fixtures import all_manifest_paths, fixture_backend_spec


@pytest.fixture
def run():
    runner = CliRunner()

    def invoke(*args):
        return runner.invoke(cli.main, [str(a) for a in args], catch_exceptions=False)

    return invoke


def jsonl(path, rows):
    path.write_text("".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows), encoding="utf-8")
    return path


def eval_config(tmp_path, **extra):
    raw = {
        "backends": [fixture_backend_spec().to_dict()],
        "manifests": [str(p) for p in all_manifest_paths()],
        "output_dir": str(tmp_path / "out"),
        "timing": "off",
        **extra,
    }
    path = tmp_path / "run.json"
    path.write_text(json.dumps(raw))
    return path


def test_eval_and_report(tmp_path, run):
    res = run("eval", "--config", eval_config(tmp_path))
    assert res.exit_code == 0
    assert res.output.startswith("| Backend | RTR | CRTR | STS | PairCLF | CLF | RRK | CLR | BTM | Avg |")
    md = run("report", "--run", tmp_path / "out")
    assert md.exit_code == 0 and md.output == res.output
    js = run("report", "--run", tmp_path / "out", "--format", "json")
    assert js.output == (tmp_path / "out" / "report.json").read_text()


def test_eval_config_error_exits_3(tmp_path, run):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"backends": [], "manifests": []}))
    assert run("eval", "--config", bad).exit_code == 3


def test_eval_partial_failure_exits_2(tmp_path, run, monkeypatch):
    remote = {"id": "down", "kind": "remote", "model_name": "m", "dim": 8, "endpoint": "http://embed.invalid",
              "retry": {"max_attempts": 1}}
    cfg = eval_config(tmp_path, backends=[remote])
    real = cli.runner.run_benchmark

    def offline(config):
        transport = httpx.MockTransport(lambda r: httpx.Response(503))
        return real(config, transport=transport, sleep=lambda s: None)

    monkeypatch.setattr(cli.runner, "run_benchmark", offline)
    res = run("eval", "--config", cfg)
    assert res.exit_code == 2
    assert "down [1]" in res.output


def test_embed_writes_precomputed_store(tmp_path, run):
    src = jsonl(tmp_path / "texts.jsonl", [{"id": "1", "text": "one"}, {"id": "2", "text": "two"}])
    out = tmp_path / "vecs.embc"
    res = run("embed", "--backend", "hash", "--in", src, "--out", out, "--instruction", "Q: {text}")
    assert res.exit_code == 0
    with VectorStore(out, 64) as store:
        assert store.get(cache_key("hash-embedder", None, "Q: one")) is not None
        assert len(store) == 2


def test_embed_unknown_backend(tmp_path, run):
    src = jsonl(tmp_path / "texts.jsonl", [{"id": "1", "text": "one"}])
    assert run("embed", "--backend", "nope", "--in", src, "--out", tmp_path / "o").exit_code == 3


def test_mine_hn(tmp_path, run):
    corpus = jsonl(tmp_path / "corpus.jsonl", [
        {"id": "p", "text": "date palm farming in oases"},
        {"id": "n1", "text": "date palm pests in oases"},
        {"id": "n2", "text": "stock market news"},
        {"id": "n3", "text": "football results"},
    ])
    pairs = jsonl(tmp_path / "pairs.jsonl", [{"query": "date palm farming", "positive_id": "p"}])
    res = run("mine-hn", "--corpus", corpus, "--pairs", pairs, "--n", 2)
    assert res.exit_code == 0
    row = json.loads(res.output)
    assert row["positive"] == "date palm farming in oases"
    assert row["negatives"][0] == "date palm pests in oases" and len(row["negatives"]) == 2
    assert run("mine-hn", "--corpus", corpus, "--pairs", pairs, "--n", 4).exit_code == 1


def test_dedupe(tmp_path, run):
    src = jsonl(tmp_path / "d.jsonl", [
        {"id": "b", "text": "the same words in a row"},
        {"id": "a", "text": "the same words in a row"},
        {"id": "c", "text": "something else entirely here"},
    ])
    kept = tmp_path / "kept.jsonl"
    res = run("dedupe", "--in", src, "--threshold", 0.8, "--kept-out", kept)
    assert json.loads(res.output) == {"input": 3, "kept": 2, "clusters": [["a", "b"]]}
    assert [json.loads(line)["id"] for line in kept.read_text().splitlines()] == ["a", "c"]


def test_chunk(tmp_path, run):
    src = jsonl(tmp_path / "docs.jsonl", [{"id": "d", "text": "Short sentence. " * 600}])
    res = run("chunk", "--in", src, "--max-tokens", 1024)
    rows = [json.loads(line) for line in res.output.splitlines()]
    assert [r["index"] for r in rows] == [0, 1, 2]
    assert all(r["token_estimate"] <= 1024 for r in rows)


def test_synthgen(tmp_path, run, monkeypatch):
    reply = json.dumps({"user_query": "q about dates", "positive": "dates grow", "hard_negative": "figs grow"})
    transport = httpx.MockTransport(lambda r: httpx.Response(200, json={"content": reply}))
    real_client = synthgen.ChatClient
    monkeypatch.setattr(synthgen, "ChatClient", lambda *a, **kw: real_client(*a, transport=transport, **kw))
    monkeypatch.setenv("CHAT_TOKEN", "secret")
    out = tmp_path / "triples.jsonl"
    res = run("synthgen", "--task", "Find farming advice", "--count", 3, "--endpoint", "http://chat",
              "--model", "m", "--api-key-env", "CHAT_TOKEN", "--out", out)
    assert res.exit_code == 0
    rows = [json.loads(line) for line in out.read_text().splitlines()]
    # three identical queries collapse to one
    assert rows == [{"task": "Find farming advice", "query": "q about dates", "positive": "dates grow",
                     "negatives": ["figs grow"]}]
    assert (tmp_path / "triples.jsonl.journal.jsonl").exists()


def test_synthgen_missing_key(tmp_path, run, monkeypatch):
    monkeypatch.delenv("NO_SUCH_VAR", raising=False)
    res = run("synthgen", "--task", "t", "--count", 1, "--endpoint", "http://chat", "--model", "m",
              "--api-key-env", "NO_SUCH_VAR", "--out", tmp_path / "o.jsonl")
    assert res.exit_code == 3
