"""Feedback term selection and query re-weighting: average vector, Rocchio, RM3.

All three models share one selection procedure:

1. each feedback document becomes a term-frequency vector normalized by its
   full (pre-filter) length;
2. terms whose corpus document frequency exceeds the DF cut are dropped,
   as are terms the corpus has never seen;
3. the surviving terms are ranked by their summed normalized frequency over
   all feedback documents and only the top ``k_terms`` are kept.

The original query is normalized but never DF-filtered.
"""

from __future__ import annotations

import json
import logging
import math
import numbers
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from ._validation import check_choice, check_scalar
from .analysis import TermVector
from .index import EmptyIndexError, InvertedIndex
from .scoring import WeightedQuery

logger = logging.getLogger(__name__)

SOURCES = ("hyde", "prf")
NORMALIZATIONS = ("l1", "none")
DOC_PRIORS = ("auto", "uniform", "score")


@dataclass(frozen=True)
class FeedbackParams:
    """Hyperparameters shared by the feedback models.

    ``k_terms=None`` disables top-k pruning and ``df_filter_ratio=None``
    disables the document-frequency filter. ``normalization="none"`` keeps raw
    term counts instead of length-normalized frequencies (average vector and
    Rocchio only; RM3 always works with probabilities).
    """

    alpha: float = 1.0
    beta: float = 0.75
    lam: float = 0.5
    k_terms: int | None = 128
    df_filter_ratio: float | None = 0.10
    filter_query_terms: bool = False
    normalization: str = "l1"
    doc_prior: str = "auto"

    def __post_init__(self):
        check_scalar(self.alpha, "alpha")
        check_scalar(self.beta, "beta")
        check_scalar(self.lam, "lambda")
        if self.k_terms is not None:
            check_scalar(self.k_terms, "k_terms", kind=numbers.Integral, min_val=1)
        if self.df_filter_ratio is not None:
            check_scalar(self.df_filter_ratio, "df_filter_ratio", min_val=0, max_val=1, min_inclusive=False)
        check_choice(self.normalization, "normalization", NORMALIZATIONS)
        check_choice(self.doc_prior, "doc_prior", DOC_PRIORS)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    @classmethod
    def from_dict(cls, data: Mapping) -> "FeedbackParams":
        data = dict(data)
        if "lambda" in data:
            data["lam"] = data.pop("lambda")
        return cls(**data)


@dataclass(frozen=True)
class FeedbackSet:
    """The feedback documents for one query, generated or retrieved."""

    docs: tuple[TermVector, ...]
    source: str = "hyde"
    scores: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "docs", tuple(self.docs))
        check_choice(self.source, "source", SOURCES)
        if not self.docs:
            raise ValueError("a feedback set needs at least one document")
        if self.scores is not None:
            scores = tuple(float(s) for s in self.scores)
            if len(scores) != len(self.docs):
                raise ValueError("retrieval scores must be given for all documents or none")
            object.__setattr__(self, "scores", scores)

    @property
    def n(self) -> int:
        return len(self.docs)


@dataclass(frozen=True)
class NormalizedFilteredVector:
    weights: Mapping[str, float]
    parent_length: int

    def pruned(self, keep: set[str] | frozenset[str]) -> "NormalizedFilteredVector":
        return NormalizedFilteredVector({t: w for t, w in self.weights.items() if t in keep},
                                        self.parent_length)


def df_threshold(index: InvertedIndex, ratio: float | None) -> int:
    """Largest document frequency that still passes the filter."""
    if ratio is None:
        return index.num_docs
    # epsilon guards against e.g. 0.1 * 70 == 7.000000000000001 style drift
    return max(1, math.floor(ratio * index.num_docs + 1e-9))


def _normalize(doc: TermVector, normalization: str) -> dict[str, float]:
    if normalization == "none":
        return {t: float(n) for t, n in doc.counts.items()}
    return {t: n / doc.length for t, n in doc.counts.items()}


def normalize_and_filter(doc: TermVector, index: InvertedIndex, params: FeedbackParams | None = None,
                         apply_filter: bool = True) -> NormalizedFilteredVector:
    """Normalize ``doc`` by its full length, then drop common and out-of-corpus terms.

    With ``apply_filter=False`` nothing is dropped (the query path).
    """
    params = params or FeedbackParams()
    if index.num_docs == 0:
        raise EmptyIndexError("feedback filtering needs a non-empty index")
    if doc.length == 0:
        return NormalizedFilteredVector({}, 0)
    weights = _normalize(doc, params.normalization)
    if apply_filter:
        cut = df_threshold(index, params.df_filter_ratio)
        weights = {t: w for t, w in weights.items() if 0 < index.doc_freq(t) <= cut}
    return NormalizedFilteredVector(weights, doc.length)


def select_feedback_terms(vectors: Sequence[NormalizedFilteredVector], k: int | None) -> set[str]:
    """Top-k terms by summed weight across ``vectors``; ties go to the lexicographically smaller term."""
    if k is not None and k < 1:
        raise ValueError("k must be >= 1")
    totals: dict[str, float] = {}
    for vec in vectors:
        for t, w in vec.weights.items():
            totals[t] = totals.get(t, 0.0) + w
    ranked = sorted(totals.items(), key=lambda kv: (-kv[1], kv[0]))
    if k is not None:
        ranked = ranked[:k]
    return {t for t, _ in ranked}


def selected_feedback_vectors(fb: FeedbackSet, index: InvertedIndex,
                              params: FeedbackParams) -> list[NormalizedFilteredVector]:
    vecs = [normalize_and_filter(d, index, params) for d in fb.docs]
    keep = select_feedback_terms(vecs, params.k_terms)
    return [v.pruned(keep) for v in vecs]


def _query_vector(query: TermVector, index: InvertedIndex, params: FeedbackParams) -> dict[str, float]:
    if query.length == 0:
        raise ValueError("query has no terms after analysis")
    return dict(normalize_and_filter(query, index, params, apply_filter=params.filter_query_terms).weights)


def _linear_update(query_vec: Mapping[str, float], fb_vecs: Sequence[NormalizedFilteredVector],
                   query_coef: float, fb_coef: float) -> dict[str, float]:
    weights = {t: query_coef * w for t, w in query_vec.items()}
    fb_sum: dict[str, float] = {}
    for vec in fb_vecs:
        for t, w in vec.weights.items():
            fb_sum[t] = fb_sum.get(t, 0.0) + w
    for t, s in fb_sum.items():
        weights[t] = weights.get(t, 0.0) + fb_coef * s
    return weights


def compute_avg_vector(query: TermVector, fb: FeedbackSet, index: InvertedIndex,
                       params: FeedbackParams | None = None) -> WeightedQuery:
    """Average of the query vector and the N selected feedback vectors."""
    params = params or FeedbackParams()
    qv = _query_vector(query, index, params)
    fvs = selected_feedback_vectors(fb, index, params)
    # Sum first, divide once, matching the arithmetic of an (N+1)-way mean.
    summed = _linear_update(qv, fvs, 1.0, 1.0)
    return WeightedQuery({t: w / (fb.n + 1) for t, w in summed.items()}, tag="avg_vector")


def compute_rocchio(query: TermVector, fb: FeedbackSet, index: InvertedIndex,
                    params: FeedbackParams | None = None) -> WeightedQuery:
    params = params or FeedbackParams()
    if params.alpha < 0 or params.beta < 0:
        raise ValueError("Rocchio needs alpha >= 0 and beta >= 0")
    qv = _query_vector(query, index, params)
    fvs = selected_feedback_vectors(fb, index, params)
    return WeightedQuery(_linear_update(qv, fvs, params.alpha, params.beta / fb.n), tag="rocchio")


def document_priors(fb: FeedbackSet, mode: str = "auto") -> list[float]:
    """Prior weight of each feedback document in the relevance model.

    ``auto`` uses retrieval scores for PRF sets that carry them and a uniform
    prior otherwise.
    """
    check_choice(mode, "doc_prior", DOC_PRIORS)
    use_scores = mode == "score" or (mode == "auto" and fb.source == "prf" and fb.scores is not None)
    if use_scores:
        if fb.scores is None:
            raise ValueError("score-weighted priors need retrieval scores")
        if any(s < 0 for s in fb.scores):
            raise ValueError("retrieval scores must be non-negative to serve as priors")
        total = sum(fb.scores)
        if total > 0:
            return [s / total for s in fb.scores]
        logger.warning("feedback scores sum to zero; falling back to uniform priors")
    return [1.0 / fb.n] * fb.n


def compute_rm3(query: TermVector, fb: FeedbackSet, index: InvertedIndex,
                params: FeedbackParams | None = None) -> WeightedQuery:
    """Interpolate the query language model with a feedback relevance model.

    ``P(t|d)`` is the selected, renormalized feedback vector of each document.
    A document left with no terms after selection contributes nothing and its
    prior mass is split evenly across the remaining documents. If every
    document is empty the query model is returned unchanged.
    """
    params = params or FeedbackParams()
    check_scalar(params.lam, "lambda", min_val=0, max_val=1)
    if query.length == 0:
        raise ValueError("query has no terms after analysis")
    p_query = {t: n / query.length for t, n in query.counts.items()}
    # RM3 is defined over probabilities regardless of the linear models' normalization.
    prob_params = FeedbackParams(**{**asdict(params), "normalization": "l1"})
    fvs = selected_feedback_vectors(fb, index, prob_params)
    priors = document_priors(fb, params.doc_prior)

    live = [i for i, v in enumerate(fvs) if v.weights]
    if not live:
        logger.warning("no feedback terms survived selection; RM3 returns the query model")
        return WeightedQuery(p_query, tag="rm3")
    lost = sum(priors[i] for i in range(fb.n) if not fvs[i].weights)
    share = lost / len(live)

    relevance: dict[str, float] = {}
    for i in live:
        weights = fvs[i].weights
        mass = sum(weights.values())
        prior = priors[i] + share
        for t, w in weights.items():
            relevance[t] = relevance.get(t, 0.0) + prior * w / mass

    lam = params.lam
    out = {t: lam * p for t, p in p_query.items()}
    for t, p in relevance.items():
        out[t] = out.get(t, 0.0) + (1.0 - lam) * p
    return WeightedQuery(out, tag="rm3")


FEEDBACK_MODELS = {
    "avg_vector": compute_avg_vector,
    "rocchio": compute_rocchio,
    "rm3": compute_rm3,
}


# -- expanded-queries side file --------------------------------------------------

@dataclass(frozen=True)
class ExpandedQuery:
    qid: str
    model: str
    query: WeightedQuery
    params: Mapping = field(default_factory=dict)

    def to_json(self) -> str:
        terms = [{"term": t, "weight": w} for t, w in self.query.sorted_terms()]
        return json.dumps({"qid": self.qid, "model": self.model, "params": dict(self.params),
                           "terms": terms}, sort_keys=True, ensure_ascii=False)


def write_expanded_queries(path: str | Path, records: Iterable[ExpandedQuery]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


def read_expanded_queries(path: str | Path) -> dict[str, ExpandedQuery]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                boosts = {item["term"]: float(item["weight"]) for item in obj["terms"]}
                rec = ExpandedQuery(str(obj["qid"]), obj["model"], WeightedQuery(boosts, obj["model"]),
                                    obj.get("params", {}))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed expanded query ({exc})") from exc
            out[rec.qid] = rec
    return out
