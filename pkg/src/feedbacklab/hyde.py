"""Hypothetical-document generation against an OpenAI-compatible chat endpoint.

Generated documents are cached per (config, qid) and can be exported to a
JSON-Lines generations file so downstream experiments run fully offline.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Mapping

import httpx

from ._validation import check_scalar

logger = logging.getLogger(__name__)

API_KEY_ENV = "OPENAI_API_KEY"


@lru_cache(maxsize=None)
def prompt_templates() -> dict[str, str]:
    """Bundled prompt templates keyed by task family."""
    raw = resources.files("feedbacklab").joinpath("data/prompts.json").read_text("utf-8")
    return json.loads(raw)


def prompt_template(family: str = "web_search") -> str:
    try:
        return prompt_templates()[family]
    except KeyError:
        raise ValueError(f"no prompt template for {family!r}; known: {sorted(prompt_templates())}") from None


class GenerationError(RuntimeError):
    def __init__(self, qid: str, message: str):
        super().__init__(f"qid {qid}: {message}")
        self.qid = qid


@dataclass(frozen=True)
class HydeConfig:
    endpoint_url: str = "http://localhost:8000/v1"
    model_name: str = "default"
    prompt_template: str = field(default_factory=prompt_template)
    num_samples: int = 8
    max_tokens: int = 512
    temperature: float = 1.0
    request_timeout: float = 120.0
    max_retries: int = 3

    def __post_init__(self):
        check_scalar(self.num_samples, "num_samples", kind=int, min_val=1)
        check_scalar(self.max_tokens, "max_tokens", kind=int, min_val=1)
        check_scalar(self.temperature, "temperature", min_val=0)
        check_scalar(self.request_timeout, "request_timeout", min_val=0, min_inclusive=False)
        check_scalar(self.max_retries, "max_retries", kind=int, min_val=0)
        if "{query}" not in self.prompt_template:
            raise ValueError("prompt_template must contain a {query} placeholder")

    @property
    def config_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    @property
    def chat_url(self) -> str:
        url = self.endpoint_url.rstrip("/")
        return url if url.endswith("/chat/completions") else url + "/chat/completions"

    def render(self, query: str) -> str:
        return self.prompt_template.replace("{query}", query)


@dataclass(frozen=True)
class GenerationRecord:
    qid: str
    query: str
    docs: tuple[str, ...]
    model_name: str
    config_hash: str
    timestamp: str

    def __post_init__(self):
        object.__setattr__(self, "docs", tuple(self.docs))

    def to_json(self) -> str:
        d = asdict(self)
        d["docs"] = list(self.docs)
        return json.dumps(d, sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_dict(cls, d: Mapping) -> "GenerationRecord":
        docs = d["docs"]
        if not isinstance(docs, list) or not all(isinstance(x, str) for x in docs):
            raise ValueError("docs must be a list of strings")
        return cls(str(d["qid"]), d["query"], tuple(docs), d.get("model_name", ""),
                   d.get("config_hash", ""), d.get("timestamp", ""))


def _atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class HydeClient:
    """Samples hypothetical documents for queries, consulting a disk cache first.

    Parameters
    ----------
    config : HydeConfig
    cache_dir : path, optional
        Records are stored under ``<cache_dir>/<config_hash>/``. No caching if omitted.
    api_key : str, optional
        Defaults to the ``OPENAI_API_KEY`` environment variable.
    http_client : httpx.Client, optional
        Injected client (tests); one is created otherwise.
    backoff : float
        Base delay in seconds between retries, doubled per attempt.
    """

    def __init__(self, config: HydeConfig, cache_dir: str | Path | None = None, api_key: str | None = None,
                 http_client: httpx.Client | None = None, backoff: float = 1.0,
                 sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self.cache_dir = Path(cache_dir) if cache_dir is not None else None
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self._http = http_client or httpx.Client(timeout=config.request_timeout)
        self.backoff = backoff
        self._sleep = sleep
        self.requests_made = 0
        self._lock = threading.Lock()

    def close(self):
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def cache_path(self, qid: str) -> Path | None:
        if self.cache_dir is None:
            return None
        name = hashlib.sha1(qid.encode("utf-8")).hexdigest()
        return self.cache_dir / self.config.config_hash / f"{name}.json"

    def _request_body(self, query: str) -> dict:
        cfg = self.config
        return {
            "model": cfg.model_name,
            "messages": [{"role": "user", "content": cfg.render(query)}],
            "n": cfg.num_samples,
            "max_tokens": cfg.max_tokens,
            "temperature": cfg.temperature,
        }

    def _post(self, qid: str, body: dict) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        attempts = self.config.max_retries + 1
        last = ""
        for attempt in range(attempts):
            if attempt:
                self._sleep(self.backoff * 2 ** (attempt - 1))
            with self._lock:
                self.requests_made += 1
            try:
                resp = self._http.post(self.config.chat_url, json=body, headers=headers,
                                       timeout=self.config.request_timeout)
            except httpx.HTTPError as exc:
                last = f"{type(exc).__name__}: {exc}"
                logger.warning("qid %s attempt %d/%d failed: %s", qid, attempt + 1, attempts, last)
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = f"HTTP {resp.status_code}"
                logger.warning("qid %s attempt %d/%d failed: %s", qid, attempt + 1, attempts, last)
                continue
            if resp.status_code != 200:
                raise GenerationError(qid, f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()
            except ValueError as exc:
                raise GenerationError(qid, f"response is not JSON: {exc}") from exc
        raise GenerationError(qid, f"giving up after {attempts} attempts ({last})")

    def _parse(self, qid: str, payload) -> list[str]:
        try:
            docs = [choice["message"]["content"] for choice in payload["choices"]]
        except (KeyError, TypeError) as exc:
            raise GenerationError(qid, f"malformed completion response (missing {exc})") from exc
        if not all(isinstance(d, str) for d in docs):
            raise GenerationError(qid, "malformed completion response (non-string content)")
        if len(docs) < self.config.num_samples:
            raise GenerationError(qid, f"partial batch: got {len(docs)} of {self.config.num_samples} samples")
        return docs[: self.config.num_samples]

    def generate(self, query: str, qid: str) -> GenerationRecord:
        path = self.cache_path(qid)
        if path is not None and path.exists():
            rec = GenerationRecord.from_dict(json.loads(path.read_text(encoding="utf-8")))
            if rec.qid == qid:
                return rec
            logger.warning("cache entry %s belongs to qid %s; regenerating", path, rec.qid)
        docs = self._parse(qid, self._post(qid, self._request_body(query)))
        rec = GenerationRecord(
            qid=qid, query=query, docs=tuple(docs), model_name=self.config.model_name,
            config_hash=self.config.config_hash,
            timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        )
        if path is not None:
            _atomic_write_text(path, rec.to_json())
        return rec

    def generate_many(self, queries: Iterable[tuple[str, str]], workers: int = 4
                      ) -> tuple[dict[str, GenerationRecord], dict[str, str]]:
        """Generate for many ``(qid, query)`` pairs with bounded parallelism.

        Returns ``(records, errors)``, both keyed by qid.
        """
        items = list(queries)
        records: dict[str, GenerationRecord] = {}
        errors: dict[str, str] = {}

        def one(item):
            qid, query = item
            try:
                return qid, self.generate(query, qid), None
            except GenerationError as exc:
                return qid, None, str(exc)

        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            for qid, rec, err in pool.map(one, items):
                if err is None:
                    records[qid] = rec
                else:
                    errors[qid] = err
        return records, errors


def generate(query: str, qid: str, config: HydeConfig, cache_dir: str | Path | None = None,
             **client_kwargs) -> GenerationRecord:
    with HydeClient(config, cache_dir=cache_dir, **client_kwargs) as client:
        return client.generate(query, qid)


def save_generations(path: str | Path, records: Iterable[GenerationRecord]) -> None:
    text = "".join(rec.to_json() + "\n" for rec in records)
    _atomic_write_text(Path(path), text)


def load_generations(path: str | Path) -> dict[str, GenerationRecord]:
    out: dict[str, GenerationRecord] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = GenerationRecord.from_dict(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed generation record ({exc})") from exc
            if rec.qid in out:
                logger.warning("%s:%d: duplicate qid %s, keeping the later record", path, lineno, rec.qid)
            out[rec.qid] = rec
    return out

