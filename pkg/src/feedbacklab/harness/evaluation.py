from __future__ import annotations

import logging
from dataclasses import dataclass

from .._validation import check_scalar
from .trec import Qrels, RunFile

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RecallResult:
    k: int
    per_query: dict[str, float]
    mean: float
    num_no_relevant: int
    num_missing_qrels: int


def recall_at_k(run: RunFile, qrels: Qrels, k: int = 20, relevance_threshold: int = 1) -> RecallResult:
    """Fraction of each query's relevant documents found in its top ``k``.

    Queries without any relevant document, or absent from the qrels, are left
    out of the mean and counted separately.
    """
    check_scalar(k, "k", kind=int, min_val=1)
    per_query: dict[str, float] = {}
    no_rel = missing = 0
    for qid in run.qids():
        if qid not in qrels:
            logger.warning("qid %s is in the run but not in the qrels; skipped", qid)
            missing += 1
            continue
        relevant = {d for d, g in qrels[qid].items() if g >= relevance_threshold}
        if not relevant:
            no_rel += 1
            continue
        hits = relevant.intersection(run.doc_ids(qid, k))
        per_query[qid] = len(hits) / len(relevant)
    mean = sum(per_query.values()) / len(per_query) if per_query else 0.0
    return RecallResult(k, per_query, mean, no_rel, missing)
