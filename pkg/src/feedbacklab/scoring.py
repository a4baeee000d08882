"""BM25 scoring of boosted (weighted) queries.

Scores are ``sum_t boost[t] * bm25(t, d)`` with the non-negative Lucene idf
``ln(1 + (N - df + 0.5) / (df + 0.5))``. Rankings are totally ordered:
descending score, then ascending doc_id.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from ._validation import check_scalar, check_top_k
from .analysis import TermVector
from .index import CorpusStats, EmptyIndexError, InvertedIndex


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 0.9
    b: float = 0.4

    def __post_init__(self):
        check_scalar(self.k1, "k1", min_val=0, min_inclusive=False)
        check_scalar(self.b, "b", min_val=0, max_val=1)

    def tag(self) -> str:
        return f"k1={self.k1:g},b={self.b:g}"


@dataclass(frozen=True)
class WeightedQuery:
    """A query as a map of term -> boost. Zero weights are dropped on construction."""

    boosts: Mapping[str, float]
    tag: str = ""

    def __post_init__(self):
        clean = {}
        for term, w in self.boosts.items():
            w = float(w)
            if not math.isfinite(w):
                raise ValueError(f"non-finite weight for term {term!r}")
            if w < 0:
                raise ValueError(f"negative weight for term {term!r}")
            if w != 0.0:
                clean[term] = w
        object.__setattr__(self, "boosts", clean)

    @classmethod
    def from_term_vector(cls, tv: TermVector, tag: str = "") -> "WeightedQuery":
        return cls({t: float(n) for t, n in tv.counts.items()}, tag)

    def __len__(self) -> int:
        return len(self.boosts)

    def __bool__(self) -> bool:
        return bool(self.boosts)

    def scaled(self, factor: float) -> "WeightedQuery":
        return WeightedQuery({t: w * factor for t, w in self.boosts.items()}, self.tag)

    def sorted_terms(self) -> list[tuple[str, float]]:
        """Terms by descending weight, ties by term."""
        return sorted(self.boosts.items(), key=lambda kv: (-kv[1], kv[0]))


@dataclass(frozen=True)
class Ranking:
    hits: tuple[tuple[str, float], ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.hits)

    def __iter__(self):
        return iter(self.hits)

    def __getitem__(self, i):
        return self.hits[i]

    @property
    def doc_ids(self) -> list[str]:
        return [d for d, _ in self.hits]

    @property
    def scores(self) -> dict[str, float]:
        return dict(self.hits)


def idf(df: int, num_docs: int) -> float:
    return math.log(1.0 + (num_docs - df + 0.5) / (df + 0.5))


def bm25_term_score(tf: int, doc_len: int, stats: CorpusStats, params: Bm25Params, df: int) -> float:
    if df <= 0:
        raise ValueError("df must be positive; terms absent from the corpus must be skipped")
    if df > stats.num_docs:
        raise ValueError(f"df={df} exceeds num_docs={stats.num_docs}")
    if tf <= 0:
        return 0.0
    norm = params.k1 * (1.0 - params.b + params.b * doc_len / stats.avg_doc_length)
    return idf(df, stats.num_docs) * tf * (params.k1 + 1.0) / (tf + norm)


def _top_k(scores: Mapping[str, float], top_k: int | None) -> Ranking:
    key = lambda kv: (-kv[1], kv[0])  # noqa: E731
    if top_k is None or top_k >= len(scores):
        hits = sorted(scores.items(), key=key)
    else:
        hits = heapq.nsmallest(top_k, scores.items(), key=key)
    return Ranking(tuple(hits))


def score_query(index: InvertedIndex, query: WeightedQuery, params: Bm25Params | None = None,
                top_k: int = 1000) -> Ranking:
    """Rank indexed documents for a boosted query, walking only the query terms' postings."""
    check_top_k(top_k)
    if index.num_docs == 0:
        raise EmptyIndexError("cannot score against an empty index")
    params = params or Bm25Params()
    stats = index.stats
    n, avgdl, k1, b = stats.num_docs, stats.avg_doc_length, params.k1, params.b
    lengths = index.doc_lengths
    acc: dict[str, float] = {}
    # Fixed term order keeps floating-point sums identical across code paths.
    for term in sorted(query.boosts):
        plist = index.postings.get(term)
        if not plist:
            continue
        boost = query.boosts[term]
        term_idf = idf(len(plist), n)
        for doc_id, tf in plist:
            s = term_idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * lengths[doc_id] / avgdl))
            acc[doc_id] = acc.get(doc_id, 0.0) + boost * s
    return _top_k(acc, top_k)


def brute_force_score(corpus: Sequence[tuple[str, TermVector]] | Iterable[tuple[str, TermVector]],
                      query: WeightedQuery, stats: CorpusStats | None = None,
                      params: Bm25Params | None = None, top_k: int | None = None) -> Ranking:
    """Reference scorer: full scan over document vectors, no index structures.

    Statistics are recomputed from ``corpus`` when ``stats`` is omitted.
    """
    docs = list(corpus)
    params = params or Bm25Params()
    if top_k is not None:
        check_top_k(top_k)
    if stats is None:
        df: dict[str, int] = {}
        for _, tv in docs:
            for t in tv.counts:
                df[t] = df.get(t, 0) + 1
        stats = CorpusStats(len(docs), sum(tv.length for _, tv in docs), df)
    if stats.num_docs == 0:
        raise EmptyIndexError("cannot score against an empty corpus")
    n, avgdl = stats.num_docs, stats.total_terms / stats.num_docs
    terms = [t for t in sorted(query.boosts) if stats.doc_freq.get(t, 0) > 0]
    scores = {}
    for doc_id, tv in docs:
        total = 0.0
        matched = False
        for t in terms:
            tf = tv.counts.get(t, 0)
            if not tf:
                continue
            dfi = stats.doc_freq[t]
            w = math.log(1.0 + (n - dfi + 0.5) / (dfi + 0.5))
            s = w * tf * (params.k1 + 1.0) / (tf + params.k1 * (1.0 - params.b + params.b * tv.length / avgdl))
            total += query.boosts[t] * s
            matched = True
        if matched:
            scores[doc_id] = total
    hits = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return Ranking(tuple(hits if top_k is None else hits[:top_k]))
