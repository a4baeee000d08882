"""Sparse retrieval with classical feedback models over retrieved or generated documents."""

from .analysis import AnalyzerConfig, TermVector, analyze, load_stopwords, term_vector, truncate_tokens
from .concat import MugiParams, mugi_concat, mugi_repeat_count, naive_concat, query2doc
from .estimators import BM25Retriever, ConcatExpander, FeedbackExpander
from .feedback import (FeedbackParams, FeedbackSet, NormalizedFilteredVector, compute_avg_vector,
                       compute_rm3, compute_rocchio, normalize_and_filter, select_feedback_terms)
from .hyde import GenerationRecord, HydeClient, HydeConfig, generate, load_generations, save_generations
from .index import (CorpusStats, InvertedIndex, build_index, doc_frequency_ratio, load_index,
                    save_index)
from .scoring import Bm25Params, Ranking, WeightedQuery, bm25_term_score, brute_force_score, score_query

__version__ = "0.1.0"

__all__ = [
    "AnalyzerConfig", "BM25Retriever", "Bm25Params", "ConcatExpander", "CorpusStats", "FeedbackExpander",
    "FeedbackParams", "FeedbackSet", "GenerationRecord", "HydeClient", "HydeConfig", "InvertedIndex",
    "MugiParams", "NormalizedFilteredVector", "Ranking", "TermVector", "WeightedQuery", "analyze",
    "bm25_term_score", "brute_force_score", "build_index", "compute_avg_vector", "compute_rm3",
    "compute_rocchio", "doc_frequency_ratio", "generate", "load_generations", "load_index",
    "load_stopwords", "mugi_concat", "mugi_repeat_count", "naive_concat", "normalize_and_filter",
    "query2doc", "save_generations", "save_index", "score_query", "select_feedback_terms",
    "term_vector", "truncate_tokens",
]
