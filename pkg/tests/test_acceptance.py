"""Acceptance suite: one test per criterion, named ``test_cN_*``.

A PASS/FAIL line per criterion is printed in the "acceptance criteria"
section of the pytest terminal summary (see ``conftest.py``).
"""

import math
import socket
import time

import numpy as np
import pytest

from feedbacklab.analysis import TermVector
from feedbacklab.concat import MugiParams, mugi_concat, mugi_repeat_count, naive_concat
from feedbacklab.feedback import FeedbackParams, FeedbackSet, compute_avg_vector, compute_rm3, compute_rocchio
from feedbacklab.harness import ExperimentConfig, read_qrels, read_topics, recall_at_k, run_experiment
from feedbacklab.harness.cli import main
from feedbacklab.harness.experiment import default_settings
from feedbacklab.hyde import GenerationError, HydeClient, HydeConfig, load_generations
from feedbacklab.index import build_index, load_index, read_corpus_jsonl, save_index
from feedbacklab.scoring import WeightedQuery, brute_force_score, score_query

from conftest import NetworkBlocked, random_index, random_tokens


def _tv(tokens):
    counts = {}
    for t in tokens:
        counts[t] = counts.get(t, 0) + 1
    return TermVector(counts)


def _random_feedback(rng, vocab, n_docs, max_len=60):
    # feedback vocabulary is wider than the corpus so some terms are out-of-corpus
    return tuple(_tv(random_tokens(rng, vocab + 50, int(rng.integers(1, max_len + 1)))) for _ in range(n_docs))


# -- 1 -------------------------------------------------------------------------------------

def test_c1_oracle_parity():
    start = time.perf_counter()
    rng = np.random.default_rng(20261014)
    corpora = 0
    for c in range(50):
        n_docs = 1000 if c % 10 == 0 else int(rng.integers(1, 1001))
        index, vectors = random_index(rng, n_docs, 200)
        corpus = list(vectors.items())
        for _ in range(3):
            terms = random_tokens(rng, 220, int(rng.integers(1, 12)))
            boosts = {t: float(rng.uniform(0.1, 3.0)) for t in terms}
            query = WeightedQuery(boosts)
            got = score_query(index, query, top_k=n_docs)
            want = brute_force_score(corpus, query)
            assert got.doc_ids == want.doc_ids
            gs, ws = got.scores, want.scores
            assert max((abs(gs[d] - ws[d]) for d in gs), default=0.0) < 1e-9
        corpora += 1
    assert corpora >= 50
    assert time.perf_counter() - start < 60


# -- 2 -------------------------------------------------------------------------------------

def test_c2_concat_equals_avg_vector_up_to_scale():
    rng = np.random.default_rng(2)
    params = FeedbackParams(df_filter_ratio=None, k_terms=None, normalization="none")
    index, _ = random_index(rng, 300, 200)
    for _ in range(100):
        q = random_tokens(rng, 200, int(rng.integers(1, 8)))
        docs = [random_tokens(rng, 250, int(rng.integers(1, 80))) for _ in range(int(rng.integers(1, 9)))]
        fb = FeedbackSet(tuple(_tv(d) for d in docs), "hyde")
        a = score_query(index, naive_concat(q, docs), top_k=index.num_docs)
        b = score_query(index, compute_avg_vector(_tv(q), fb, index, params), top_k=index.num_docs)
        assert a.doc_ids == b.doc_ids
        sa, sb = a.scores, b.scores
        ratios = [sa[d] / sb[d] for d in a.doc_ids]
        assert (max(ratios) - min(ratios)) / abs(np.mean(ratios)) < 1e-9


# -- 3 -------------------------------------------------------------------------------------

@pytest.mark.parametrize("n", [1, 2, 4, 8])
def test_c3_rocchio_reduces_to_avg_vector(n):
    rng = np.random.default_rng(300 + n)
    index, _ = random_index(rng, 200, 200)
    for trial in range(25):
        settings = [FeedbackParams(), FeedbackParams(df_filter_ratio=None, k_terms=None),
                    FeedbackParams(k_terms=5), FeedbackParams(normalization="none")][trial % 4]
        q = _tv(random_tokens(rng, 200, int(rng.integers(1, 8))))
        fb = FeedbackSet(_random_feedback(rng, 200, n), "hyde")
        avg = compute_avg_vector(q, fb, index, settings)
        p = FeedbackParams(**{**settings.__dict__, "alpha": 1 / (n + 1), "beta": n / (n + 1)})
        roc = compute_rocchio(q, fb, index, p)
        assert set(avg.boosts) == set(roc.boosts)
        for t in avg.boosts:
            assert abs(avg.boosts[t] - roc.boosts[t]) <= 1e-12


# -- 4 -------------------------------------------------------------------------------------

def _oracle_mixture(fb, index, ratio, k, priors):
    """Prior-weighted mixture of selected, renormalized document models, written from scratch."""
    limit = max(1, math.floor(ratio * index.num_docs + 1e-9))
    kept = []
    for doc in fb.docs:
        total = sum(doc.counts.values())
        kept.append({t: c / total for t, c in doc.counts.items() if 0 < index.doc_freq(t) <= limit})
    summed = {}
    for d in kept:
        for t, w in d.items():
            summed[t] = summed.get(t, 0.0) + w
    chosen = set(sorted(summed, key=lambda t: (-summed[t], t))[:k])
    models = [{t: w for t, w in d.items() if t in chosen} for d in kept]
    live = [i for i, m in enumerate(models) if m]
    bonus = sum(priors[i] for i in range(len(models)) if i not in live) / len(live)
    mix = {}
    for i in live:
        mass = sum(models[i].values())
        for t, w in models[i].items():
            mix[t] = mix.get(t, 0.0) + (priors[i] + bonus) * w / mass
    return mix


@pytest.mark.parametrize("lam", [0.0, 0.5, 1.0])
def test_c4_rm3_is_a_distribution(lam):
    rng = np.random.default_rng(int(lam * 10) + 40)
    index, _ = random_index(rng, 200, 200)
    checked = 0
    for trial in range(60):
        q = _tv(random_tokens(rng, 200, int(rng.integers(1, 8))))
        n = int(rng.integers(1, 9))
        docs = _random_feedback(rng, 200, n)
        if trial % 2:
            scores = tuple(sorted(rng.uniform(0.5, 20.0, size=n), reverse=True))
            fb = FeedbackSet(docs, "prf", scores)
            priors = [s / sum(scores) for s in scores]
        else:
            fb = FeedbackSet(docs, "hyde")
            priors = [1 / n] * n
        k = [128, 10, 3][trial % 3]
        out = compute_rm3(q, fb, index, FeedbackParams(lam=lam, k_terms=k))
        w = out.boosts
        assert abs(sum(w.values()) - 1.0) <= 1e-9
        assert all(0.0 <= v <= 1.0 for v in w.values())
        p_q = {t: c / q.length for t, c in q.counts.items()}
        if lam == 1.0:
            assert w == p_q
        if lam == 0.0:
            mix = _oracle_mixture(fb, index, 0.10, k, priors)
            if not mix:
                assert w == p_q  # nothing survived selection
                continue
            assert set(w) == set(mix)
            for t in mix:
                assert abs(w[t] - mix[t]) <= 1e-12
        checked += 1
    assert checked >= 40


# -- 5 -------------------------------------------------------------------------------------

def test_c5_default_hyperparameters():
    d = default_settings()
    fb = d["feedback"]
    assert fb["alpha"] == 1.0 and fb["beta"] == 0.75 and fb["lambda"] == 0.5
    assert fb["k_terms"] == 128 and fb["df_filter_ratio"] == 0.10
    assert d["num_feedback_docs"] == 8
    assert d["hyde"]["num_samples"] == 8 and d["hyde"]["max_tokens"] == 512
    assert d["query2doc"] == {"repeat": 5, "max_doc_tokens": 128}
    assert d["mugi"]["phi"] == 5.0
    assert d["eval"] == {"metric": "recall", "k": 20}


# -- 6 -------------------------------------------------------------------------------------

def test_c6_mugi_gamma():
    assert mugi_repeat_count(10, [100, 100, 100], MugiParams(5)) == 6
    assert mugi_repeat_count(10, [20, 25], MugiParams(5)) == 1
    # 30 feedback tokens over a one-term query -> gamma 6 -> a: 6*1 + 1
    doc = ["a", "b"] + [f"z{i}" for i in range(28)]
    out = mugi_concat(["a"], [doc])
    assert out.boosts["a"] == 7.0 and out.boosts["b"] == 1.0

    rng = np.random.default_rng(6)
    for _ in range(1000):
        qlen = int(rng.integers(1, 40))
        lens = [int(x) for x in rng.integers(0, 600, size=int(rng.integers(1, 10)))]
        phi = MugiParams(float(rng.choice([1.0, 2.5, 5.0, 10.0])))
        g = mugi_repeat_count(qlen, lens, phi)
        assert g >= 1
        more = list(lens)
        more[int(rng.integers(0, len(lens)))] += int(rng.integers(1, 400))
        assert mugi_repeat_count(qlen, more, phi) >= g
        assert mugi_repeat_count(qlen + int(rng.integers(1, 20)), lens, phi) <= g


# -- 7 -------------------------------------------------------------------------------------

def test_c7_constructed_end_to_end_gain(toy_dir):
    start = time.perf_counter()
    index = build_index(read_corpus_jsonl(toy_dir / "corpus.jsonl"))
    assert index.num_docs == 30
    topics = read_topics(toy_dir / "topics.tsv")
    qrels = read_qrels(toy_dir / "qrels.txt")
    gens = load_generations(toy_dir / "generations.jsonl")

    def recall(method):
        cfg = ExperimentConfig(method=method, feedback_source="generations_file",
                               generations=str(toy_dir / "generations.jsonl"))
        res = run_experiment(cfg, index, topics, gens)
        assert res.exit_code == 0
        return recall_at_k(res.run, qrels, 20).mean

    baseline = recall("bm25")
    assert baseline == 0.5
    for method in ("rocchio", "rm3", "avg_vector"):
        got = recall(method)
        assert got > baseline
        assert got == 1.0
    assert time.perf_counter() - start < 5


# -- 8 -------------------------------------------------------------------------------------

def test_c8_determinism(toy_dir, tmp_path):
    corpus = toy_dir / "corpus.jsonl"
    for name in ("a", "b"):
        assert main(["index", "--corpus", str(corpus), "--output", str(tmp_path / f"idx_{name}")]) == 0
    save_index(load_index(tmp_path / "idx_a"), tmp_path / "idx_c")
    for f in ("index.bin", "meta.json", "docstore.jsonl"):
        ref = (tmp_path / "idx_a" / f).read_bytes()
        assert (tmp_path / "idx_b" / f).read_bytes() == ref
        assert (tmp_path / "idx_c" / f).read_bytes() == ref

    outputs = []
    for run in ("r1", "r2"):
        out = tmp_path / f"{run}.txt"
        side = tmp_path / f"{run}.jsonl"
        rc = main(["run", "--index", str(tmp_path / "idx_a"), "--topics", str(toy_dir / "topics.tsv"),
                   "--method", "rm3", "--generations", str(toy_dir / "generations.jsonl"),
                   "--output", str(out), "--expanded-output", str(side)])
        assert rc == 0
        outputs.append((out.read_bytes(), side.read_bytes()))
    assert outputs[0] == outputs[1]
    assert outputs[0][0]


# -- 9 -------------------------------------------------------------------------------------

def test_c9_offline(toy_dir, tmp_path):
    with pytest.raises(NetworkBlocked):
        socket.create_connection(("93.184.216.34", 443), timeout=0.1)
    cfg = HydeConfig(endpoint_url="http://10.0.0.1:8000/v1", max_retries=0, request_timeout=1.0)
    with HydeClient(cfg, backoff=0.0) as client:
        with pytest.raises(GenerationError):
            client.generate("q", "q1")
        assert client.requests_made == 1
    # the end-to-end flow needs nothing beyond the bundled files
    out = tmp_path / "run.txt"
    rc = main(["run", "--index", str(_saved_toy_index(toy_dir, tmp_path)), "--topics",
               str(toy_dir / "topics.tsv"), "--method", "rocchio", "--generations",
               str(toy_dir / "generations.jsonl"), "--output", str(out)])
    assert rc == 0 and out.read_text()


def _saved_toy_index(toy_dir, tmp_path):
    path = tmp_path / "idx"
    save_index(build_index(read_corpus_jsonl(toy_dir / "corpus.jsonl")), path)
    return path
