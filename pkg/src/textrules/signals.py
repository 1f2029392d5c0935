"""Signal-word extraction: what the model "says" a text is about.

For each text, the masked-position distribution over the vocabulary gives
candidate signal words (top by probability). Dividing each word's
probability by its corpus-wide average probability then rewards words that
are specific to this text rather than generically likely everywhere; the top
survivors are the strong signal words used as transaction items by the rule
miner.

The corpus average is stamped with the backend state version it was computed
under, and scoring against a stale average is an error: fine-tuning changes
the distribution, so averages must be rebuilt each iteration.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from textrules.backend import Vocabulary
from textrules.mathutil import softmax

# Floor for the corpus-average divisor, guarding against words the model
# never predicts anywhere.
AVERAGE_FLOOR = 1e-12


class SignalsError(RuntimeError):
    """Mixing signal statistics across backend versions."""


@dataclass(frozen=True)
class SignalCandidates:
    """Top-ranked signal words of one text, with their probabilities.

    ``indices`` are vocabulary positions ordered by probability descending,
    ties by vocabulary order.
    """

    text_id: str
    indices: tuple[int, ...]
    probs: tuple[float, ...]

    def words(self, vocab: Vocabulary) -> tuple[str, ...]:
        return tuple(vocab.words[i] for i in self.indices)


@dataclass(frozen=True)
class StrongSignals:
    """Corpus-specialized signal words of one text, ranked by specificity."""

    text_id: str
    indices: tuple[int, ...]
    scores: tuple[float, ...]
    words: tuple[str, ...]

    def as_set(self) -> frozenset[str]:
        return frozenset(self.words)


@dataclass(frozen=True)
class CorpusAverage:
    """Mean masked-position probability of every vocabulary word."""

    means: np.ndarray
    backend_version: int
    text_count: int


class CorpusAverageBuilder:
    """Streaming accumulator so full probability rows are never all held."""

    def __init__(self, vocab_size: int):
        self._sum = np.zeros(vocab_size)
        self._count = 0

    def add(self, prob_rows: np.ndarray) -> None:
        if prob_rows.ndim != 2 or prob_rows.shape[1] != self._sum.shape[0]:
            raise ValueError("probability rows do not match vocabulary size")
        self._sum += prob_rows.sum(axis=0)
        self._count += prob_rows.shape[0]

    def finish(self, backend_version: int) -> CorpusAverage:
        if self._count == 0:
            raise SignalsError("corpus average over zero texts")
        return CorpusAverage(
            means=self._sum / self._count,
            backend_version=backend_version,
            text_count=self._count,
        )


def mask_probabilities(logit_rows: np.ndarray) -> np.ndarray:
    """Per-row masked-position probabilities from raw logits."""
    return softmax(logit_rows, axis=-1)


def extract_candidates(
    text_id: str,
    prob_row: np.ndarray,
    count: int,
    exclude_indices: Optional[Iterable[int]] = None,
) -> SignalCandidates:
    """Top ``count`` vocabulary words of one text by masked probability.

    ``exclude_indices`` optionally drops words (a stoplist) before ranking;
    by default nothing is excluded.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    row = np.asarray(prob_row, dtype=float)
    if exclude_indices:
        row = row.copy()
        row[list(exclude_indices)] = -np.inf
    order = np.argsort(-row, kind="stable")[:count]
    order = order[np.isfinite(row[order])]
    return SignalCandidates(
        text_id=text_id,
        indices=tuple(int(i) for i in order),
        probs=tuple(float(row[i]) for i in order),
    )


def strong_signal_words(
    candidates: SignalCandidates,
    average: CorpusAverage,
    count: int,
    backend_version: int,
    vocab: Vocabulary,
) -> StrongSignals:
    """Re-rank a text's candidates by probability over corpus-average probability.

    Keeps the top ``count``; ties break by vocabulary order. The candidate
    list bounds the search, so ``count`` must not exceed the candidate count
    used upstream.
    """
    if average.backend_version != backend_version:
        raise SignalsError(
            f"corpus average from backend version {average.backend_version} "
            f"used at version {backend_version}; rebuild signals after fine-tuning"
        )
    if count < 1:
        raise ValueError("count must be at least 1")
    indices = np.asarray(candidates.indices, dtype=int)
    probs = np.asarray(candidates.probs, dtype=float)
    divisor = np.maximum(average.means[indices], AVERAGE_FLOOR)
    scores = probs / divisor
    order = np.lexsort((indices, -scores))[:count]
    picked = indices[order]
    return StrongSignals(
        text_id=candidates.text_id,
        indices=tuple(int(i) for i in picked),
        scores=tuple(float(s) for s in scores[order]),
        words=tuple(vocab.words[i] for i in picked),
    )


def transactions_from(strong: Sequence[StrongSignals]) -> list[frozenset[str]]:
    """Mining input: one item set per text."""
    return [s.as_set() for s in strong]
