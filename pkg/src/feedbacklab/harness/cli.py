"""Command-line entry point: ``feedbacklab {index,generate,run,eval,defaults}``.

Exit codes: 0 success, 1 partial (per-query) failures, 2 fatal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

from ..analysis import AnalyzerConfig, load_stopwords
from ..feedback import write_expanded_queries
from ..hyde import HydeClient, HydeConfig, prompt_template, save_generations
from ..index import build_index, read_corpus_jsonl, save_index
from ..concat import MugiParams
from ..scoring import Bm25Params
from .evaluation import recall_at_k
from .experiment import METHODS, SOURCES, ExperimentConfig, default_settings, run_experiment
from .trec import format_run, read_qrels, read_run, read_topics, write_run

logger = logging.getLogger("feedbacklab")

EXIT_OK, EXIT_PARTIAL, EXIT_FATAL = 0, 1, 2


def _cmd_index(args) -> int:
    stopwords = load_stopwords(args.stopwords) if args.stopwords else load_stopwords()
    if args.no_stopwords:
        stopwords = frozenset()
    analyzer = AnalyzerConfig(lowercase=not args.keep_case, stopwords=stopwords, stemmer=args.stemmer)
    index = build_index(read_corpus_jsonl(args.corpus), analyzer, store_docs=not args.no_docstore)
    save_index(index, args.output)
    print(f"indexed {index.num_docs} documents, {len(index.postings)} terms -> {args.output}")
    return EXIT_OK


def _cmd_generate(args) -> int:
    template = args.prompt_template or prompt_template(args.prompt_family)
    config = HydeConfig(
        endpoint_url=args.endpoint, model_name=args.model, prompt_template=template,
        num_samples=args.num_samples, max_tokens=args.max_tokens, temperature=args.temperature,
        request_timeout=args.timeout, max_retries=args.max_retries,
    )
    topics = read_topics(args.topics)
    with HydeClient(config, cache_dir=args.cache_dir) as client:
        records, errors = client.generate_many(topics.items(), workers=args.workers)
    save_generations(args.output, [records[q] for q in topics if q in records])
    for qid, err in errors.items():
        logger.error("%s", err)
    print(f"generated {len(records)}/{len(topics)} queries -> {args.output}")
    return EXIT_PARTIAL if errors else EXIT_OK


_FEEDBACK_FLAGS = ("alpha", "beta", "lam", "k_terms", "df_filter_ratio", "normalization", "doc_prior")


def _experiment_from_args(args) -> ExperimentConfig:
    config = ExperimentConfig.from_file(args.config) if args.config else None
    top = {}
    for key in ("index", "topics", "method", "generations", "num_feedback_docs", "prf_depth",
                "top_k", "workers", "output", "expanded_output"):
        val = getattr(args, key)
        if val is not None:
            top[key] = val
    if args.source is not None:
        top["feedback_source"] = args.source
    if config is None:
        if "generations" in top and "feedback_source" not in top:
            top["feedback_source"] = "generations_file"
        config = ExperimentConfig.from_dict(top)
    else:
        config = replace(config, **top)

    fb = {name: getattr(args, name) for name in _FEEDBACK_FLAGS if getattr(args, name) is not None}
    if args.no_df_filter:
        fb["df_filter_ratio"] = None
    if args.unlimited_terms:
        fb["k_terms"] = None
    if fb:
        config = replace(config, feedback=replace(config.feedback, **fb))
    if args.phi is not None:
        config = replace(config, mugi=MugiParams(args.phi))
    if args.k1 is not None or args.b is not None:
        config = replace(config, bm25=Bm25Params(args.k1 if args.k1 is not None else config.bm25.k1,
                                                  args.b if args.b is not None else config.bm25.b))
    return config


def _cmd_run(args) -> int:
    config = _experiment_from_args(args)
    result = run_experiment(config)
    if config.output:
        write_run(result.run, config.output)
    else:
        sys.stdout.write(format_run(result.run))
    if config.expanded_output:
        write_expanded_queries(config.expanded_output, (result.expanded[q] for q in sorted(result.expanded)))
    n = len(result.run.entries)
    logger.info("%d queries, %d errors, tag %s", n, len(result.errors), config.run_tag())
    return result.exit_code


def _cmd_eval(args) -> int:
    if args.metric != "recall":
        raise ValueError(f"unsupported metric {args.metric!r}")
    res = recall_at_k(read_run(args.run), read_qrels(args.qrels), args.k, args.threshold)
    if args.per_query:
        for qid in sorted(res.per_query):
            print(f"recall_{args.k}\t{qid}\t{res.per_query[qid]:.4f}")
    print(f"recall_{args.k}\tall\t{res.mean:.4f}")
    print(f"num_q\tall\t{len(res.per_query)}")
    if res.num_no_relevant:
        print(f"num_q_no_relevant\tall\t{res.num_no_relevant}")
    return EXIT_OK


def _cmd_defaults(args) -> int:
    print(json.dumps(default_settings(), indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="feedbacklab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="build an index from a JSON-Lines corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--output", required=True, help="index directory")
    p.add_argument("--stemmer", choices=("porter", "none"), default="porter")
    p.add_argument("--stopwords", help="stopword file, one term per line")
    p.add_argument("--no-stopwords", action="store_true")
    p.add_argument("--keep-case", action="store_true")
    p.add_argument("--no-docstore", action="store_true", help="do not keep raw document text")
    p.set_defaults(func=_cmd_index)

    p = sub.add_parser("generate", help="sample hypothetical documents from an OpenAI-compatible endpoint")
    p.add_argument("--topics", required=True)
    p.add_argument("--endpoint", required=True, help="base URL, e.g. http://localhost:8000/v1")
    p.add_argument("--output", required=True)
    p.add_argument("--model", default="default")
    p.add_argument("--num-samples", type=int, default=8)
    p.add_argument("--max-tokens", type=int, default=512)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--prompt-family", default="web_search")
    p.add_argument("--prompt-template", help="overrides --prompt-family; must contain {query}")
    p.add_argument("--cache-dir")
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--max-retries", type=int, default=3)
    p.add_argument("--timeout", type=float, default=120.0)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("run", help="retrieve with an expansion method and write a TREC run")
    p.add_argument("--config", help="TOML or JSON experiment config; flags override it")
    p.add_argument("--index")
    p.add_argument("--topics")
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--source", choices=SOURCES)
    p.add_argument("--generations")
    p.add_argument("--num-feedback-docs", type=int)
    p.add_argument("--prf-depth", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--k-terms", type=int)
    p.add_argument("--unlimited-terms", action="store_true")
    p.add_argument("--df-filter-ratio", type=float)
    p.add_argument("--no-df-filter", action="store_true")
    p.add_argument("--normalization", choices=("l1", "none"))
    p.add_argument("--doc-prior", choices=("auto", "uniform", "score"))
    p.add_argument("--phi", type=float)
    p.add_argument("--k1", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--top-k", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--output", help="run file (stdout if omitted)")
    p.add_argument("--expanded-output", help="JSON-Lines file of the weighted queries")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("eval", help="score a run against qrels")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--metric", default="recall", choices=("recall",))
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--threshold", type=int, default=1, help="minimum grade counted as relevant")
    p.add_argument("--per-query", action="store_true")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("defaults", help="print the default hyperparameters as JSON")
    p.set_defaults(func=_cmd_defaults)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError) as exc:
        logger.error("%s", exc)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
