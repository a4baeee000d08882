"""scikit-learn style wrappers around the functional API.

``BM25Retriever`` is fitted on a corpus and predicts rankings. The expanders
are fitted on an index (or a fitted retriever) and transform
``(query, feedback_documents)`` pairs into weighted queries, so feedback
models can be swapped, cloned, and grid-searched like any other estimator::

    retriever = BM25Retriever().fit(corpus)
    expander = FeedbackExpander(model="rocchio").fit(retriever)
    rankings = retriever.predict(expander.transform([(query, hyde_docs)]))
"""

from __future__ import annotations

from typing import Iterable, Mapping, Sequence

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_choice, check_top_k
from .analysis import AnalyzerConfig, TermVector, analyze, load_stopwords, term_vector
from .concat import MugiParams, mugi_concat, naive_concat, query2doc
from .feedback import FEEDBACK_MODELS, FeedbackParams, FeedbackSet
from .index import InvertedIndex, build_index
from .scoring import Bm25Params, Ranking, WeightedQuery, score_query


def _as_index(X) -> InvertedIndex:
    if isinstance(X, InvertedIndex):
        return X
    if isinstance(X, BM25Retriever):
        check_is_fitted(X, "index_")
        return X.index_
    raise TypeError(f"expected an InvertedIndex or a fitted BM25Retriever, got {type(X).__name__}")


class BM25Retriever(BaseEstimator):
    """BM25 over an in-memory inverted index.

    ``fit`` accepts ``(doc_id, text)`` pairs, a ``{doc_id: text}`` mapping,
    or a prebuilt :class:`InvertedIndex` (whose analyzer then wins).
    """

    def __init__(self, k1=0.9, b=0.4, top_k=1000, stemmer="porter", stopwords=None,
                 lowercase=True, store_docs=True):
        self.k1 = k1
        self.b = b
        self.top_k = top_k
        self.stemmer = stemmer
        self.stopwords = stopwords
        self.lowercase = lowercase
        self.store_docs = store_docs

    def _analyzer(self) -> AnalyzerConfig:
        stop = load_stopwords() if self.stopwords is None else frozenset(self.stopwords)
        return AnalyzerConfig(lowercase=self.lowercase, stopwords=stop, stemmer=self.stemmer)

    def fit(self, X, y=None):
        Bm25Params(self.k1, self.b)
        check_top_k(self.top_k)
        if isinstance(X, InvertedIndex):
            self.index_ = X
        else:
            docs = X.items() if isinstance(X, Mapping) else X
            self.index_ = build_index(docs, self._analyzer(), store_docs=self.store_docs)
        self.n_documents_ = self.index_.num_docs
        return self

    def _to_query(self, q) -> WeightedQuery:
        if isinstance(q, WeightedQuery):
            return q
        if isinstance(q, TermVector):
            return WeightedQuery.from_term_vector(q)
        if isinstance(q, str):
            return WeightedQuery.from_term_vector(term_vector(self.index_.analyze(q)))
        raise TypeError(f"cannot use {type(q).__name__} as a query")

    def search(self, query) -> Ranking:
        check_is_fitted(self, "index_")
        return score_query(self.index_, self._to_query(query), Bm25Params(self.k1, self.b), self.top_k)

    def predict(self, X: Iterable) -> list[Ranking]:
        """Rank documents for each query (text, TermVector or WeightedQuery)."""
        return [self.search(q) for q in X]


class FeedbackExpander(TransformerMixin, BaseEstimator):
    """Average-vector, Rocchio, or RM3 query update.

    ``transform`` takes ``(query_text, feedback)`` pairs where feedback is a
    list of document texts (treated as generated documents) or a ready
    :class:`FeedbackSet`.
    """

    def __init__(self, model="rocchio", alpha=1.0, beta=0.75, lam=0.5, k_terms=128,
                 df_filter_ratio=0.10, normalization="l1", doc_prior="auto"):
        self.model = model
        self.alpha = alpha
        self.beta = beta
        self.lam = lam
        self.k_terms = k_terms
        self.df_filter_ratio = df_filter_ratio
        self.normalization = normalization
        self.doc_prior = doc_prior

    @property
    def feedback_params(self) -> FeedbackParams:
        return FeedbackParams(alpha=self.alpha, beta=self.beta, lam=self.lam, k_terms=self.k_terms,
                              df_filter_ratio=self.df_filter_ratio, normalization=self.normalization,
                              doc_prior=self.doc_prior)

    def fit(self, X, y=None):
        check_choice(self.model, "model", FEEDBACK_MODELS)
        self.feedback_params
        self.index_ = _as_index(X)
        return self

    def _feedback_set(self, fb) -> FeedbackSet:
        if isinstance(fb, FeedbackSet):
            return fb
        return FeedbackSet(tuple(term_vector(self.index_.analyze(d)) for d in fb), "hyde")

    def transform(self, X: Iterable[tuple[str, Sequence[str] | FeedbackSet]]) -> list[WeightedQuery]:
        check_is_fitted(self, "index_")
        update = FEEDBACK_MODELS[self.model]
        params = self.feedback_params
        out = []
        for query, fb in X:
            q = query if isinstance(query, TermVector) else term_vector(self.index_.analyze(query))
            out.append(update(q, self._feedback_set(fb), self.index_, params))
        return out


class ConcatExpander(TransformerMixin, BaseEstimator):
    """Naive / Query2Doc / MuGI concatenation as a transformer.

    Fitting on an index only borrows its analyzer; without one the default
    analyzer is used.
    """

    def __init__(self, method="mugi", phi=5.0, repeat=5, max_doc_tokens=128):
        self.method = method
        self.phi = phi
        self.repeat = repeat
        self.max_doc_tokens = max_doc_tokens

    def fit(self, X=None, y=None):
        check_choice(self.method, "method", ("naive_concat", "query2doc", "mugi"))
        MugiParams(self.phi)
        self.analyzer_ = _as_index(X).analyzer if X is not None else AnalyzerConfig()
        return self

    def transform(self, X: Iterable[tuple[str, Sequence[str]]]) -> list[WeightedQuery]:
        check_is_fitted(self, "analyzer_")
        out = []
        for query, docs in X:
            q = analyze(query, self.analyzer_)
            d = [analyze(text, self.analyzer_) for text in docs]
            if self.method == "naive_concat":
                out.append(naive_concat(q, d))
            elif self.method == "query2doc":
                out.append(query2doc(q, d[0] if d else [], self.repeat, self.max_doc_tokens))
            else:
                out.append(mugi_concat(q, d, MugiParams(self.phi)))
        return out
