"""Readers and writers for TREC topics, qrels, and run files."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from ..scoring import Ranking


class TrecFormatError(ValueError):
    pass


@dataclass(frozen=True)
class RunEntry:
    doc_id: str
    rank: int
    score: float
    tag: str


@dataclass
class RunFile:
    """Ranked results per qid. Entries of a qid are kept in rank order."""

    entries: dict[str, list[RunEntry]] = field(default_factory=dict)

    def add_ranking(self, qid: str, ranking: Ranking, tag: str) -> None:
        self.entries[qid] = [RunEntry(d, i, s, tag) for i, (d, s) in enumerate(ranking, 1)]

    def doc_ids(self, qid: str, k: int | None = None) -> list[str]:
        docs = [e.doc_id for e in self.entries.get(qid, [])]
        return docs if k is None else docs[:k]

    def qids(self) -> list[str]:
        return sorted(self.entries)

    def __eq__(self, other):
        if not isinstance(other, RunFile):
            return NotImplemented
        return self.entries == other.entries


Qrels = dict[str, dict[str, int]]


def format_run(run: RunFile) -> str:
    lines = []
    for qid in run.qids():
        for e in run.entries[qid]:
            lines.append(f"{qid} Q0 {e.doc_id} {e.rank} {e.score:.6f} {e.tag}")
    return "".join(line + "\n" for line in lines)


def write_run(run: RunFile, path: str | Path) -> None:
    Path(path).write_text(format_run(run), encoding="utf-8")


def read_run(path: str | Path) -> RunFile:
    run = RunFile()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 6:
                raise TrecFormatError(f"{path}:{lineno}: expected 6 columns, got {len(parts)}")
            qid, q0, doc_id, rank_s, score_s, tag = parts
            if q0 not in ("Q0", "0"):
                raise TrecFormatError(f"{path}:{lineno}: second column must be Q0, got {q0!r}")
            try:
                rank = int(rank_s)
                score = float(score_s)
            except ValueError:
                raise TrecFormatError(f"{path}:{lineno}: bad rank/score {rank_s!r} {score_s!r}") from None
            if not math.isfinite(score):
                raise TrecFormatError(f"{path}:{lineno}: non-finite score")
            entries = run.entries.setdefault(qid, [])
            if rank != len(entries) + 1:
                raise TrecFormatError(f"{path}:{lineno}: rank {rank} breaks contiguous ranking for {qid}")
            if entries and score > entries[-1].score:
                raise TrecFormatError(f"{path}:{lineno}: scores must be non-increasing within {qid}")
            entries.append(RunEntry(doc_id, rank, score, tag))
    return run


def read_qrels(path: str | Path) -> Qrels:
    qrels: Qrels = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 4:
                raise TrecFormatError(f"{path}:{lineno}: expected 4 columns, got {len(parts)}")
            qid, _, doc_id, grade_s = parts
            try:
                grade = int(grade_s)
            except ValueError:
                raise TrecFormatError(f"{path}:{lineno}: relevance grade must be an integer") from None
            qrels.setdefault(qid, {})[doc_id] = grade
    return qrels


def write_qrels(qrels: Mapping[str, Mapping[str, int]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for qid in sorted(qrels):
            for doc_id in sorted(qrels[qid]):
                fh.write(f"{qid} 0 {doc_id} {qrels[qid][doc_id]}\n")


def read_topics(path: str | Path) -> dict[str, str]:
    """Read ``qid<TAB>query`` lines. Order of first appearance is preserved."""
    topics: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            qid, sep, query = line.partition("\t")
            if not sep or not qid.strip():
                raise TrecFormatError(f"{path}:{lineno}: expected 'qid<TAB>query'")
            topics[qid.strip()] = query.strip()
    return topics


def write_topics(topics: Mapping[str, str] | Iterable[tuple[str, str]], path: str | Path) -> None:
    items = topics.items() if isinstance(topics, Mapping) else topics
    with open(path, "w", encoding="utf-8") as fh:
        for qid, query in items:
            fh.write(f"{qid}\t{query}\n")
