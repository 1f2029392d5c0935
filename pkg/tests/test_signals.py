"""Signal word extraction and corpus-specialized re-ranking."""

import numpy as np
import pytest

from textrules.backend import Vocabulary
from textrules.mathutil import softmax
from textrules.signals import (
    AVERAGE_FLOOR,
    CorpusAverageBuilder,
    SignalCandidates,
    SignalsError,
    extract_candidates,
    mask_probabilities,
    strong_signal_words,
    transactions_from,
)

VOCAB = Vocabulary(words=("the", "game", "stock", "team", "bank"))


def average_of(rows, version=0):
    builder = CorpusAverageBuilder(len(VOCAB))
    builder.add(np.asarray(rows, dtype=float))
    return builder.finish(version)


def test_mask_probabilities_are_row_softmax():
    logits = np.array([[1.0, 2.0, 3.0, 0.0, -1.0]])
    assert np.allclose(mask_probabilities(logits), softmax(logits, axis=-1))


def test_extract_candidates_orders_by_probability():
    row = np.array([0.1, 0.4, 0.2, 0.25, 0.05])
    cand = extract_candidates("t1", row, 3)
    assert cand.text_id == "t1"
    assert cand.indices == (1, 3, 2)
    assert cand.probs == (0.4, 0.25, 0.2)
    assert cand.words(VOCAB) == ("game", "team", "stock")


def test_extract_candidates_tie_breaks_by_vocab_order():
    row = np.array([0.25, 0.25, 0.25, 0.25, 0.0])
    cand = extract_candidates("t1", row, 3)
    assert cand.indices == (0, 1, 2)


def test_extract_candidates_exclusion():
    row = np.array([0.5, 0.3, 0.1, 0.05, 0.05])
    cand = extract_candidates("t1", row, 2, exclude_indices=[0])
    assert cand.indices == (1, 2)


def test_extract_candidates_count_validation():
    with pytest.raises(ValueError):
        extract_candidates("t1", np.ones(5) / 5, 0)


def test_corpus_average_builder():
    builder = CorpusAverageBuilder(5)
    builder.add(np.array([[0.2, 0.2, 0.2, 0.2, 0.2]]))
    builder.add(np.array([[0.4, 0.0, 0.2, 0.2, 0.2], [0.0, 0.4, 0.2, 0.2, 0.2]]))
    average = builder.finish(backend_version=3)
    assert average.text_count == 3
    assert average.backend_version == 3
    assert np.allclose(average.means, [0.2, 0.2, 0.2, 0.2, 0.2])


def test_corpus_average_builder_validation():
    builder = CorpusAverageBuilder(5)
    with pytest.raises(ValueError):
        builder.add(np.ones(5))  # 1-D, must be a batch
    with pytest.raises(ValueError):
        builder.add(np.ones((2, 4)))  # wrong width
    with pytest.raises(SignalsError, match="zero texts"):
        CorpusAverageBuilder(5).finish(0)  # nothing added


def test_specialization_demotes_ubiquitous_words():
    """A word common in every text loses to a rarer but distinctive one.

    Text probabilities alone would rank "the" first; dividing by the corpus
    average flips the order toward words concentrated in this text.
    """
    rows = np.array(
        [
            [0.50, 0.30, 0.05, 0.10, 0.05],
            [0.50, 0.05, 0.30, 0.05, 0.10],
            [0.50, 0.05, 0.05, 0.05, 0.35],
        ]
    )
    average = average_of(rows)
    cand = extract_candidates("t0", rows[0], 5)
    strong = strong_signal_words(cand, average, 2, backend_version=0, vocab=VOCAB)
    assert strong.words == ("game", "team")
    # the specialized score of "game" is 0.30 / mean(0.30, 0.05, 0.05)
    assert strong.scores[0] == pytest.approx(0.30 / np.mean([0.30, 0.05, 0.05]))
    assert "the" not in strong.words


def test_strong_signals_tie_break_by_vocab_order():
    rows = np.array([[0.2, 0.2, 0.2, 0.2, 0.2]])
    average = average_of(rows)
    cand = extract_candidates("t0", rows[0], 5)
    strong = strong_signal_words(cand, average, 3, backend_version=0, vocab=VOCAB)
    assert strong.indices == (0, 1, 2)  # all scores equal, vocabulary order


def test_strong_signals_restricted_to_candidates():
    rows = np.array([[0.50, 0.30, 0.05, 0.10, 0.05]])
    average = average_of(rows)
    cand = extract_candidates("t0", rows[0], 2)  # only "the" and "game" survive
    strong = strong_signal_words(cand, average, 4, backend_version=0, vocab=VOCAB)
    assert set(strong.words) <= {"the", "game"}


def test_strong_signals_stale_version_rejected():
    rows = np.array([[0.2, 0.2, 0.2, 0.2, 0.2]])
    average = average_of(rows, version=0)
    cand = extract_candidates("t0", rows[0], 3)
    with pytest.raises(SignalsError, match="rebuild signals"):
        strong_signal_words(cand, average, 2, backend_version=1, vocab=VOCAB)


def test_average_floor_guards_tiny_divisors():
    average = average_of([[0.0, 0.5, 0.5, 0.5, 0.5]])
    cand = SignalCandidates(text_id="t", indices=(0,), probs=(1e-6,))
    strong = strong_signal_words(cand, average, 1, backend_version=0, vocab=VOCAB)
    assert np.isfinite(strong.scores[0])
    assert strong.scores[0] == pytest.approx(1e-6 / AVERAGE_FLOOR)


def test_transactions_from():
    rows = np.array([[0.5, 0.3, 0.1, 0.05, 0.05]])
    average = average_of(rows)
    cand = extract_candidates("t0", rows[0], 3)
    strong = strong_signal_words(cand, average, 3, backend_version=0, vocab=VOCAB)
    (transaction,) = transactions_from([strong])
    assert transaction == frozenset(strong.words)
