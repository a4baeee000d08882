"""String-concatenation baselines expressed as term-frequency queries.

Concatenating token lists and counting is the same as summing count
vectors, so each baseline is built directly as a :class:`WeightedQuery`
whose boosts are integer term counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from ._validation import check_scalar
from .analysis import TermVector, term_vector, truncate_tokens
from .scoring import WeightedQuery

QUERY2DOC_REPEAT = 5
QUERY2DOC_MAX_TOKENS = 128


@dataclass(frozen=True)
class MugiParams:
    phi: float = 5.0

    def __post_init__(self):
        check_scalar(self.phi, "phi", min_val=0, min_inclusive=False)


def _repeat_concat(query: Sequence[str], docs: Sequence[Sequence[str]], repeat: int, tag: str) -> WeightedQuery:
    if not query:
        raise ValueError("query has no terms after analysis")
    tv = term_vector(query).scaled(repeat)
    for doc in docs:
        tv = tv + term_vector(doc)
    return WeightedQuery.from_term_vector(tv, tag)


def naive_concat(query: Sequence[str], fb_docs: Sequence[Sequence[str]]) -> WeightedQuery:
    """Query followed by every feedback document, all terms kept."""
    return _repeat_concat(query, fb_docs, 1, "naive_concat")


def query2doc(query: Sequence[str], doc: Sequence[str], repeat: int = QUERY2DOC_REPEAT,
              max_doc_tokens: int | None = QUERY2DOC_MAX_TOKENS) -> WeightedQuery:
    """The query repeated ``repeat`` times plus one document truncated to ``max_doc_tokens``."""
    if max_doc_tokens is not None:
        doc = truncate_tokens(doc, max_doc_tokens)
    return _repeat_concat(query, [doc], repeat, "query2doc")


def mugi_repeat_count(query_len: int, doc_lens: Sequence[int], params: MugiParams | None = None) -> int:
    """Adaptive query repeat: total feedback length over ``query_len * phi``.

    Rounded half-up and never below 1.
    """
    params = params or MugiParams()
    if query_len < 1:
        raise ValueError("query_len must be >= 1")
    if not doc_lens:
        raise ValueError("doc_lens must be non-empty")
    gamma = sum(doc_lens) / (query_len * params.phi)
    return max(1, math.floor(gamma + 0.5))


def mugi_concat(query: Sequence[str], fb_docs: Sequence[Sequence[str]],
                params: MugiParams | None = None) -> WeightedQuery:
    gamma = mugi_repeat_count(len(query), [len(d) for d in fb_docs], params)
    return _repeat_concat(query, fb_docs, gamma, "mugi")


def concat_tokens(query: Sequence[str], fb_docs: Sequence[Sequence[str]], repeat: int = 1) -> list[str]:
    """The literal concatenated token list; used to cross-check the count-based builders."""
    out = list(query) * repeat
    for doc in fb_docs:
        out.extend(doc)
    return out


def as_term_vector(query: WeightedQuery) -> TermVector:
    """Inverse of :meth:`WeightedQuery.from_term_vector` for integer-weighted queries."""
    counts = {}
    for t, w in query.boosts.items():
        if w != int(w):
            raise ValueError(f"weight of {t!r} is not an integer count")
        counts[t] = int(w)
    return TermVector(counts)
