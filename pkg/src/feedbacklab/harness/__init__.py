from .evaluation import RecallResult, recall_at_k
from .experiment import ExperimentConfig, ExperimentResult, default_settings, run_experiment
from .trec import (RunEntry, RunFile, TrecFormatError, format_run, read_qrels, read_run, read_topics,
                   write_qrels, write_run, write_topics)

__all__ = [
    "ExperimentConfig", "ExperimentResult", "RecallResult", "RunEntry", "RunFile", "TrecFormatError",
    "default_settings", "format_run", "read_qrels", "read_run", "read_topics", "recall_at_k",
    "run_experiment", "write_qrels", "write_run", "write_topics",
]
