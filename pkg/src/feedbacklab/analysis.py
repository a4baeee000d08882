"""Text analysis: lowercase, tokenize, drop stopwords, stem.

The default chain mirrors the Lucene English analyzer family: split on
runs of non-alphanumeric characters, lowercase, remove the classic 33-word
English stop set, and apply the original Porter stemmer.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from nltk.stem.porter import PorterStemmer

STEMMERS = ("none", "porter")
DEFAULT_TOKEN_PATTERN = r"[^\W_]+"


def load_stopwords(path: str | Path | None = None) -> frozenset[str]:
    """Read a stopword list, one term per line. Blank lines and ``#`` comments are skipped.

    With no path, the bundled English list is returned.
    """
    if path is None:
        text = resources.files("feedbacklab").joinpath("data/stopwords_en.txt").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    words = set()
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.add(line)
    return frozenset(words)


@dataclass(frozen=True)
class AnalyzerConfig:
    lowercase: bool = True
    stopwords: frozenset[str] = field(default_factory=load_stopwords)
    stemmer: str = "porter"
    token_pattern: str = DEFAULT_TOKEN_PATTERN

    def __post_init__(self):
        if self.stemmer not in STEMMERS:
            raise ValueError(f"unknown stemmer {self.stemmer!r}; expected one of {STEMMERS}")
        object.__setattr__(self, "stopwords", frozenset(self.stopwords))
        re.compile(self.token_pattern)

    def to_dict(self) -> dict:
        return {
            "lowercase": self.lowercase,
            "stemmer": self.stemmer,
            "stopwords": sorted(self.stopwords),
            "token_pattern": self.token_pattern,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "AnalyzerConfig":
        return cls(
            lowercase=bool(data["lowercase"]),
            stopwords=frozenset(data["stopwords"]),
            stemmer=data["stemmer"],
            token_pattern=data["token_pattern"],
        )


@lru_cache(maxsize=None)
def _compiled(pattern: str) -> re.Pattern:
    return re.compile(pattern)


_porter = PorterStemmer(mode=PorterStemmer.ORIGINAL_ALGORITHM)


@lru_cache(maxsize=1 << 16)
def _porter_stem(token: str) -> str:
    return _porter.stem(token, to_lowercase=False)


def analyze(text: str, config: AnalyzerConfig | None = None) -> list[str]:
    """Turn text into a list of index terms, preserving order."""
    if config is None:
        config = DEFAULT_ANALYZER
    tokens = _compiled(config.token_pattern).findall(text)
    if config.lowercase:
        tokens = [t.lower() for t in tokens]
    if config.stopwords:
        tokens = [t for t in tokens if t not in config.stopwords]
    if config.stemmer == "porter":
        tokens = [_porter_stem(t) for t in tokens]
    return tokens


@dataclass(frozen=True)
class TermVector:
    """Sparse term-frequency vector of one analyzed text."""

    counts: Mapping[str, int]
    length: int = field(init=False)

    def __post_init__(self):
        counts = {}
        for term, n in self.counts.items():
            if n < 0:
                raise ValueError(f"negative count for term {term!r}")
            if n:
                counts[term] = int(n)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "length", sum(counts.values()))

    def __getitem__(self, term: str) -> int:
        return self.counts.get(term, 0)

    def __contains__(self, term: str) -> bool:
        return term in self.counts

    def __len__(self) -> int:
        return len(self.counts)

    def __iter__(self):
        return iter(self.counts)

    def __add__(self, other: "TermVector") -> "TermVector":
        merged = Counter(self.counts)
        merged.update(other.counts)
        return TermVector(merged)

    def __eq__(self, other):
        if not isinstance(other, TermVector):
            return NotImplemented
        return self.counts == other.counts

    def __hash__(self):
        return hash(frozenset(self.counts.items()))

    def scaled(self, factor: int) -> "TermVector":
        return TermVector({t: n * factor for t, n in self.counts.items()})

    def to_tokens(self) -> list[str]:
        """Expand back into a token list (sorted by term, so order carries no meaning)."""
        return [t for t in sorted(self.counts) for _ in range(self.counts[t])]


def term_vector(tokens: Iterable[str]) -> TermVector:
    return TermVector(Counter(tokens))


def truncate_tokens(tokens: Sequence[str], max_tokens: int) -> list[str]:
    if max_tokens < 0:
        raise ValueError("max_tokens must be >= 0")
    return list(tokens[:max_tokens])


DEFAULT_ANALYZER = AnalyzerConfig()
