"""End-to-end experiment: feedback acquisition, query update, BM25 retrieval."""

from __future__ import annotations

import hashlib
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .._validation import check_choice, check_scalar
from ..analysis import term_vector
from ..concat import QUERY2DOC_MAX_TOKENS, QUERY2DOC_REPEAT, MugiParams, mugi_concat, naive_concat, query2doc
from ..feedback import FEEDBACK_MODELS, ExpandedQuery, FeedbackParams, FeedbackSet
from ..hyde import GenerationRecord, HydeConfig, load_generations
from ..index import InvertedIndex, load_index
from ..scoring import Bm25Params, Ranking, WeightedQuery, score_query
from .trec import RunFile, read_topics

logger = logging.getLogger(__name__)

METHODS = ("bm25", "avg_vector", "rm3", "rocchio", "naive_concat", "query2doc", "mugi")
SOURCES = ("prf_topk", "generations_file")
CONCAT_METHODS = ("naive_concat", "query2doc", "mugi")
EVAL_METRIC = "recall"
EVAL_K = 20


@dataclass(frozen=True)
class ExperimentConfig:
    index: str | None = None
    topics: str | None = None
    method: str = "bm25"
    feedback_source: str = "prf_topk"
    generations: str | None = None
    num_feedback_docs: int = 8
    prf_depth: int = 1000
    feedback: FeedbackParams = field(default_factory=FeedbackParams)
    mugi: MugiParams = field(default_factory=MugiParams)
    bm25: Bm25Params = field(default_factory=Bm25Params)
    query2doc_repeat: int = QUERY2DOC_REPEAT
    query2doc_max_tokens: int = QUERY2DOC_MAX_TOKENS
    top_k: int = 1000
    workers: int = 1
    output: str | None = None
    expanded_output: str | None = None

    def __post_init__(self):
        check_choice(self.method, "method", METHODS)
        check_choice(self.feedback_source, "feedback_source", SOURCES)
        check_scalar(self.num_feedback_docs, "num_feedback_docs", kind=int, min_val=1)
        check_scalar(self.prf_depth, "prf_depth", kind=int, min_val=1)
        check_scalar(self.top_k, "top_k", kind=int, min_val=1)
        check_scalar(self.workers, "workers", kind=int, min_val=1)
        check_scalar(self.query2doc_repeat, "query2doc_repeat", kind=int, min_val=1)
        check_scalar(self.query2doc_max_tokens, "query2doc_max_tokens", kind=int, min_val=0)
        if self.needs_feedback and self.feedback_source == "generations_file" and not self.generations:
            raise ValueError("feedback_source=generations_file requires a generations file")

    @property
    def needs_feedback(self) -> bool:
        return self.method != "bm25"

    def method_params(self) -> dict[str, Any]:
        """The parameters that influence this method's output (recorded in side files and tags)."""
        p: dict[str, Any] = {"bm25": asdict(self.bm25)}
        if self.needs_feedback:
            p["feedback_source"] = self.feedback_source
            p["num_feedback_docs"] = self.num_feedback_docs
            if self.feedback_source == "prf_topk":
                p["prf_depth"] = self.prf_depth
        if self.method in FEEDBACK_MODELS:
            p["feedback"] = self.feedback.to_dict()
        elif self.method == "mugi":
            p["mugi"] = asdict(self.mugi)
        elif self.method == "query2doc":
            p["query2doc"] = {"repeat": self.query2doc_repeat, "max_doc_tokens": self.query2doc_max_tokens}
        return p

    def run_tag(self) -> str:
        digest = hashlib.sha1(json.dumps(self.method_params(), sort_keys=True).encode()).hexdigest()[:8]
        return f"{self.method}_{self.bm25.tag()}_{digest}"

    def to_dict(self) -> dict[str, Any]:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["feedback"] = self.feedback.to_dict()
        d["mugi"] = asdict(self.mugi)
        d["bm25"] = asdict(self.bm25)
        return d

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExperimentConfig":
        data = dict(data)
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown experiment config keys: {sorted(unknown)}")
        if "feedback" in data and isinstance(data["feedback"], Mapping):
            data["feedback"] = FeedbackParams.from_dict(data["feedback"])
        if "mugi" in data and isinstance(data["mugi"], Mapping):
            data["mugi"] = MugiParams(**data["mugi"])
        if "bm25" in data and isinstance(data["bm25"], Mapping):
            data["bm25"] = Bm25Params(**data["bm25"])
        return cls(**data)

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        if path.suffix == ".toml":
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        else:
            data = json.loads(path.read_text(encoding="utf-8"))
        base = path.parent
        # relative paths in a config file are relative to the file
        for key in ("index", "topics", "generations", "output", "expanded_output"):
            if data.get(key) and not Path(data[key]).is_absolute():
                data[key] = str(base / data[key])
        return cls.from_dict(data)


def default_settings() -> dict[str, Any]:
    """Every default hyperparameter of the pipeline, in one serializable mapping."""
    exp = ExperimentConfig()
    hyde = HydeConfig()
    return {
        "feedback": exp.feedback.to_dict(),
        "bm25": asdict(exp.bm25),
        "mugi": asdict(exp.mugi),
        "query2doc": {"repeat": exp.query2doc_repeat, "max_doc_tokens": exp.query2doc_max_tokens},
        "num_feedback_docs": exp.num_feedback_docs,
        "prf_depth": exp.prf_depth,
        "hyde": {"num_samples": hyde.num_samples, "max_tokens": hyde.max_tokens,
                 "temperature": hyde.temperature, "prompt_template": hyde.prompt_template},
        "eval": {"metric": EVAL_METRIC, "k": EVAL_K},
    }


@dataclass
class ExperimentResult:
    run: RunFile
    expanded: dict[str, ExpandedQuery]
    errors: dict[str, str] = field(default_factory=dict)
    warnings: dict[str, list[str]] = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return 1 if self.errors else 0


@dataclass
class _Feedback:
    vectors: list
    tokens: list[list[str]]
    scores: list[float] | None
    source: str


class _QueryRunner:
    def __init__(self, config: ExperimentConfig, index: InvertedIndex,
                 generations: Mapping[str, GenerationRecord] | None):
        self.config = config
        self.index = index
        self.generations = generations or {}

    def feedback_for(self, qid: str, base: WeightedQuery) -> _Feedback | None:
        cfg, index = self.config, self.index
        n = cfg.num_feedback_docs
        if cfg.feedback_source == "prf_topk":
            first = score_query(index, base, cfg.bm25, top_k=max(cfg.prf_depth, n))
            hits = list(first)[:n]
            if not hits:
                return None
            vectors = [index.doc_vector(d) for d, _ in hits]
            tokens = []
            for (d, _), tv in zip(hits, vectors):
                toks = index.doc_tokens(d)
                if toks is None:
                    if cfg.method == "query2doc":
                        raise ValueError("query2doc over retrieved documents needs an index built with a docstore")
                    toks = tv.to_tokens()
                tokens.append(toks)
            return _Feedback(vectors, tokens, [s for _, s in hits], "prf")
        rec = self.generations.get(qid)
        if rec is None:
            raise KeyError(f"qid {qid} missing from generations file")
        docs = list(rec.docs[:n])
        if not docs:
            return None
        tokens = [index.analyze(d) for d in docs]
        return _Feedback([term_vector(t) for t in tokens], tokens, None, "hyde")

    def expand(self, qid: str, q_tokens: list[str], base: WeightedQuery, warn: list[str]) -> WeightedQuery:
        cfg = self.config
        fb = self.feedback_for(qid, base)
        if fb is None:
            warn.append("no feedback documents; using the unexpanded query")
            return base
        if cfg.method in FEEDBACK_MODELS:
            fset = FeedbackSet(tuple(fb.vectors), fb.source, fb.scores)
            return FEEDBACK_MODELS[cfg.method](term_vector(q_tokens), fset, self.index, cfg.feedback)
        if cfg.method == "naive_concat":
            return naive_concat(q_tokens, fb.tokens)
        if cfg.method == "query2doc":
            return query2doc(q_tokens, fb.tokens[0], cfg.query2doc_repeat, cfg.query2doc_max_tokens)
        return mugi_concat(q_tokens, fb.tokens, cfg.mugi)

    def __call__(self, item: tuple[str, str]):
        qid, text = item
        cfg = self.config
        warn: list[str] = []
        error = None
        q_tokens = self.index.analyze(text)
        base = WeightedQuery.from_term_vector(term_vector(q_tokens), "bm25")
        if not base:
            warn.append("query is empty after analysis")
            return qid, Ranking(), base, error, warn
        query = base
        if cfg.needs_feedback:
            try:
                query = self.expand(qid, q_tokens, base, warn)
            except (KeyError, ValueError) as exc:
                error = str(exc.args[0]) if exc.args else repr(exc)
                query = base
            if not query:
                warn.append("expansion produced an empty query; using the unexpanded query")
                query = base
        return qid, score_query(self.index, query, cfg.bm25, cfg.top_k), query, error, warn


def run_experiment(config: ExperimentConfig, index: InvertedIndex | None = None,
                   topics: Mapping[str, str] | None = None,
                   generations: Mapping[str, GenerationRecord] | None = None) -> ExperimentResult:
    """Run one method over all topics.

    Inputs not passed in are loaded from the paths in ``config``. Per-query
    failures (e.g. a qid missing from the generations file) are recorded in
    ``result.errors`` and that query is scored unexpanded.
    """
    if index is None:
        if not config.index:
            raise ValueError("no index given")
        index = load_index(config.index)
    if topics is None:
        if not config.topics:
            raise ValueError("no topics given")
        topics = read_topics(config.topics)
    if generations is None and config.needs_feedback and config.feedback_source == "generations_file":
        generations = load_generations(config.generations)

    runner = _QueryRunner(config, index, generations)
    tag = config.run_tag()
    params = config.method_params()
    result = ExperimentResult(RunFile(), {})
    items = list(topics.items())
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            outputs = list(pool.map(runner, items))
    else:
        outputs = [runner(item) for item in items]

    for qid, ranking, query, error, warn in sorted(outputs, key=lambda o: o[0]):
        result.run.add_ranking(qid, ranking, tag)
        result.expanded[qid] = ExpandedQuery(qid, config.method, replace(query, tag=config.method), params)
        if error is not None:
            logger.error("qid %s: %s", qid, error)
            result.errors[qid] = error
        if warn:
            for w in warn:
                logger.warning("qid %s: %s", qid, w)
            result.warnings[qid] = warn
    return result
