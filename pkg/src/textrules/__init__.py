"""Weakly supervised text classification from label names only.

Starting from one label name per category, the engine scores texts with a
masked-LM backend, mines per-category DNF word rules from the texts' strong
signal words, and regenerates pseudo labels from the rules through three
scoring units, iterating until the labels stabilize.
"""

from textrules.corpus import Category, Corpus, Metrics, TextRecord, evaluate, load_corpus
from textrules.config import RunConfig
from textrules.pipeline import PipelineResult, run_pipeline, sweep

__all__ = [
    "Category",
    "Corpus",
    "Metrics",
    "TextRecord",
    "evaluate",
    "load_corpus",
    "RunConfig",
    "PipelineResult",
    "run_pipeline",
    "sweep",
]
