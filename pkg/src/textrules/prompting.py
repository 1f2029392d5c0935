"""Prompt templates and similarity-weighted keyword scoring.

A template turns a text into a masked prompt. Each category keyword expands
into its nearest vocabulary words by embedding cosine; a category's score for
a text is the best weighted logit sum over its keywords' expansions. This is
the label-name-only scoring used to bootstrap pseudo labels, and the same
machinery rescored with mined rule words later on.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from textrules.backend import MASK_MARKER, Backend, BackendError
from textrules.mathutil import softmax

logger = logging.getLogger(__name__)

TEXT_SLOT = "{text}"

_WS_RE = re.compile(r"\s+")


@dataclass(frozen=True)
class Template:
    """Masked prompt pattern with a single text slot.

    ``pattern`` must contain exactly one ``{text}`` slot and exactly one
    mask marker, e.g. ``"A [MASK] news: {text}"``.
    """

    pattern: str

    def __post_init__(self) -> None:
        if self.pattern.count(TEXT_SLOT) != 1:
            raise ValueError(f"template needs exactly one {TEXT_SLOT} slot: {self.pattern!r}")
        if self.pattern.count(MASK_MARKER) != 1:
            raise ValueError(f"template needs exactly one {MASK_MARKER} marker: {self.pattern!r}")

    def fill(self, text: str) -> str:
        """Prompt for a text, mask left in place."""
        return self.pattern.replace(TEXT_SLOT, text.strip())

    def word_sentence(self, word: str) -> str:
        """Carrier sentence for a single word: slot dropped, mask filled.

        Embedding this sentence puts the word into the template's context
        rather than in isolation.
        """
        out = self.pattern.replace(TEXT_SLOT, " ").replace(MASK_MARKER, word)
        return _WS_RE.sub(" ", out).strip()


def resolve_anchor(backend: Backend, label_name: str) -> str:
    """Map a label name onto an in-vocabulary anchor word.

    Multi-word or out-of-vocabulary names fall back to their first
    in-vocabulary fragment, with a warning; a name with no usable fragment
    is an error.
    """
    vocab = backend.vocabulary
    if label_name in vocab:
        return label_name
    fragments = re.findall(r"[a-zA-Z0-9']+", label_name.lower())
    for fragment in fragments:
        if fragment in vocab:
            logger.warning("label name %r not in vocabulary; anchoring on %r", label_name, fragment)
            return fragment
    raise BackendError(f"label name {label_name!r} has no in-vocabulary anchor")


class EmbeddingCache:
    """Per-(backend, version) cache of the full vocabulary embedding matrix.

    Fine-tuning bumps the backend version, which transparently invalidates
    the cached matrix.
    """

    def __init__(self) -> None:
        self._store: dict = {}

    def vocab_matrix(self, backend: Backend) -> np.ndarray:
        key = (id(backend), backend.version)
        if key not in self._store:
            matrix = backend.embed_words(backend.vocabulary.words)
            norms = np.linalg.norm(matrix, axis=1, keepdims=True)
            norms[norms == 0.0] = 1.0
            self._store[key] = matrix / norms
        return self._store[key]


def nearest_words(
    backend: Backend,
    word: str,
    count: int,
    cache: EmbeddingCache,
) -> list[tuple[str, float]]:
    """Top ``count`` vocabulary words by embedding cosine to ``word``.

    The word itself has similarity 1 and so always ranks first; ties break
    by vocabulary order.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    matrix = cache.vocab_matrix(backend)
    target = matrix[backend.vocabulary.index(word)]
    sims = matrix @ target
    order = np.argsort(-sims, kind="stable")[:count]
    words = backend.vocabulary.words
    return [(words[i], float(sims[i])) for i in order]


@dataclass(frozen=True)
class VerbalizerEntry:
    """One keyword's expansion: nearest words with softmax-of-similarity weights."""

    anchor: str
    words: tuple[str, ...]
    indices: tuple[int, ...]
    weights: tuple[float, ...]

    def score(self, logit_row: np.ndarray) -> float:
        """Weighted logit sum at the masked position."""
        return float(np.asarray(self.weights) @ logit_row[list(self.indices)])


def build_entry(
    backend: Backend,
    keyword: str,
    count: int,
    cache: EmbeddingCache,
) -> VerbalizerEntry:
    neighbors = nearest_words(backend, keyword, count, cache)
    words = tuple(w for w, _ in neighbors)
    sims = np.array([s for _, s in neighbors])
    vocab = backend.vocabulary
    return VerbalizerEntry(
        anchor=keyword,
        words=words,
        indices=tuple(vocab.index(w) for w in words),
        weights=tuple(float(w) for w in softmax(sims)),
    )


def category_score(entries: Sequence[VerbalizerEntry], logit_row: np.ndarray) -> float:
    """Best keyword score for one category; any keyword may carry the text."""
    if not entries:
        raise ValueError("category has no verbalizer entries")
    return max(entry.score(logit_row) for entry in entries)


def score_rows(
    logit_rows: np.ndarray,
    category_entries: Sequence[Sequence[VerbalizerEntry]],
) -> np.ndarray:
    """Raw category-score matrix (texts x categories) from masked logits."""
    out = np.empty((logit_rows.shape[0], len(category_entries)))
    for i, row in enumerate(logit_rows):
        for z, entries in enumerate(category_entries):
            out[i, z] = category_score(entries, row)
    return out
