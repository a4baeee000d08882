import json
import socket
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from feedbacklab.hyde import (GenerationError, GenerationRecord, HydeClient, HydeConfig, generate,
                              load_generations, prompt_template, save_generations)

from conftest import NetworkBlocked


class StubEndpoint:
    """Minimal OpenAI-compatible chat-completions server on 127.0.0.1."""

    def __init__(self):
        self.requests = []
        self.fail_first = 0
        self.status = 500
        self.mode = "ok"
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
                stub.requests.append({"path": self.path, "body": body,
                                      "auth": self.headers.get("Authorization")})
                if len(stub.requests) <= stub.fail_first:
                    self.send_response(stub.status)
                    self.end_headers()
                    return
                if stub.mode == "garbage":
                    payload = b"not json"
                elif stub.mode == "no_choices":
                    payload = json.dumps({"object": "chat.completion"}).encode()
                else:
                    n = body["n"] if stub.mode == "ok" else body["n"] - 1
                    # provider enforces max_tokens; words stand in for model tokens
                    words = [f"w{i}" for i in range(body["max_tokens"] + 100)]
                    text = " ".join(words[: body["max_tokens"]])
                    choices = [{"index": i, "message": {"role": "assistant", "content": f"doc{i} {text}"}}
                               for i in range(n)]
                    payload = json.dumps({"choices": choices}).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.server.server_address[1]}/v1"
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def stub():
    s = StubEndpoint()
    yield s
    s.close()


def client_for(stub, tmp_path=None, **cfg):
    config = HydeConfig(endpoint_url=stub.url, model_name="stub-model", **cfg)
    return HydeClient(config, cache_dir=tmp_path, api_key="secret", backoff=0.0)


def test_generate_against_stub(stub):
    with client_for(stub) as client:
        rec = client.generate("what is rm3", "q1")
    assert len(rec.docs) == 8
    assert all(len(d.split()) <= 512 + 1 for d in rec.docs)
    req = stub.requests[0]
    assert req["path"] == "/v1/chat/completions"
    assert req["body"]["n"] == 8 and req["body"]["max_tokens"] == 512
    assert req["body"]["model"] == "stub-model"
    assert "Question: what is rm3" in req["body"]["messages"][0]["content"]
    assert req["auth"] == "Bearer secret"
    assert rec.config_hash == client.config.config_hash


def test_cache_hit_makes_no_request(stub, tmp_path):
    with client_for(stub, tmp_path) as client:
        first = client.generate("q text", "q1")
        path = client.cache_path("q1")
        cached_bytes = path.read_text(encoding="utf-8")
        again = client.generate("q text", "q1")
    assert len(stub.requests) == 1
    assert again == first
    assert again.to_json() == cached_bytes


def test_config_change_forces_regeneration(stub, tmp_path):
    with client_for(stub, tmp_path) as client:
        client.generate("q", "q1")
    with client_for(stub, tmp_path, temperature=0.7) as client:
        client.generate("q", "q1")
    assert len(stub.requests) == 2


def test_every_config_field_changes_hash():
    base = HydeConfig()
    variants = [HydeConfig(endpoint_url="http://x"), HydeConfig(model_name="m"),
                HydeConfig(prompt_template="Q: {query}"), HydeConfig(num_samples=4),
                HydeConfig(max_tokens=128), HydeConfig(temperature=0.5),
                HydeConfig(request_timeout=5.0), HydeConfig(max_retries=0)]
    hashes = {v.config_hash for v in variants}
    assert base.config_hash not in hashes
    assert len(hashes) == len(variants)


def test_retries_then_fails(stub, tmp_path):
    stub.fail_first = 10
    with client_for(stub, tmp_path, max_retries=2) as client:
        with pytest.raises(GenerationError, match="q7") as info:
            client.generate("q", "q7")
        assert info.value.qid == "q7"
        assert client.cache_path("q7").exists() is False
    assert len(stub.requests) == 3


def test_retry_recovers(stub):
    stub.fail_first = 1
    with client_for(stub, max_retries=2) as client:
        rec = client.generate("q", "q1")
    assert len(rec.docs) == 8
    assert len(stub.requests) == 2


def test_client_error_not_retried(stub):
    stub.fail_first, stub.status = 5, 400
    with client_for(stub, max_retries=3) as client:
        with pytest.raises(GenerationError, match="HTTP 400"):
            client.generate("q", "q1")
    assert len(stub.requests) == 1


@pytest.mark.parametrize("mode, match", [("garbage", "not JSON"), ("no_choices", "malformed"),
                                         ("partial", "partial batch")])
def test_bad_responses_raise_and_are_not_cached(stub, tmp_path, mode, match):
    stub.mode = mode
    with client_for(stub, tmp_path) as client:
        with pytest.raises(GenerationError, match=match):
            client.generate("q", "q1")
        assert not client.cache_path("q1").exists()


def test_unreachable_endpoint_raises():
    sock = socket.socket()
    sock.bind(("127.0.0.1", 0))
    port = sock.getsockname()[1]
    sock.close()
    config = HydeConfig(endpoint_url=f"http://127.0.0.1:{port}/v1", max_retries=1, request_timeout=2.0)
    with HydeClient(config, backoff=0.0) as client:
        with pytest.raises(GenerationError, match="2 attempts"):
            client.generate("q", "q1")


def test_generate_many_bounded_parallel(stub, tmp_path):
    queries = [(f"q{i}", f"query {i}") for i in range(12)]
    with client_for(stub, tmp_path) as client:
        records, errors = client.generate_many(queries, workers=4)
    assert not errors
    assert sorted(records) == sorted(q for q, _ in queries)
    assert len(list(tmp_path.rglob("*.json"))) == 12
    assert not list(tmp_path.rglob("*.tmp"))


def test_module_level_generate(stub):
    rec = generate("q", "q1", HydeConfig(endpoint_url=stub.url, num_samples=2), backoff=0.0)
    assert len(rec.docs) == 2


def test_save_load_round_trip(tmp_path):
    recs = [GenerationRecord(f"q{i}", f"query {i}", (f"doc a{i}", f"doc b{i}"), "m", "h", "t") for i in range(3)]
    path = tmp_path / "gens.jsonl"
    save_generations(path, recs)
    assert list(load_generations(path).values()) == recs


def test_load_bad_line_names_it(tmp_path):
    path = tmp_path / "gens.jsonl"
    good = GenerationRecord("q1", "x", ("d",), "m", "h", "t").to_json()
    path.write_text(good + "\n{broken\n")
    with pytest.raises(ValueError, match=":2:"):
        load_generations(path)


def test_duplicate_qid_last_wins(tmp_path, caplog):
    path = tmp_path / "gens.jsonl"
    a = GenerationRecord("q1", "x", ("first",), "m", "h", "t").to_json()
    b = GenerationRecord("q1", "x", ("second",), "m", "h", "t").to_json()
    path.write_text(a + "\n" + b + "\n")
    assert load_generations(path)["q1"].docs == ("second",)
    assert "duplicate qid q1" in caplog.text


def test_load_many_records(tmp_path):
    recs = [GenerationRecord(f"q{i}", "x", ("d1", "d2"), "m", "h", "t") for i in range(1000)]
    save_generations(tmp_path / "g.jsonl", recs)
    loaded = load_generations(tmp_path / "g.jsonl")
    assert len(loaded) == 1000
    assert loaded["q999"].qid == "q999"


def test_config_validation():
    with pytest.raises(ValueError):
        HydeConfig(num_samples=0)
    with pytest.raises(ValueError):
        HydeConfig(prompt_template="no placeholder")
    with pytest.raises(ValueError):
        prompt_template("nope")
    assert HydeConfig(endpoint_url="http://h/v1/chat/completions").chat_url == "http://h/v1/chat/completions"


def test_non_loopback_network_is_blocked():
    with pytest.raises(NetworkBlocked):
        socket.create_connection(("10.255.255.1", 80), timeout=0.1)
