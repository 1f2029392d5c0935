"""Rule-enhanced scoring: three views of how well a text fits each category.

Unit 1 widens each category's verbalizer with its strongest rule words and
scores masked logits. Unit 2 compares sentence embeddings of the text
against embedded rule words (pairs blend their members' vectors). Unit 3
turns each rule into an "and"-joined sentence and measures strong-signal-word
overlap with the text. The three probabilities are averaged into the new
pseudo label.

All per-category work (verbalizer expansion, rule word embeddings, rule
sentence signal words) happens once per iteration in the scorer constructor;
per-text scoring then touches only that text's row data.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from textrules.backend import Backend
from textrules.corpus import CategoryDistribution
from textrules.mathutil import softmax
from textrules.prompting import EmbeddingCache, Template, VerbalizerEntry, build_entry
from textrules.rules import LogicalRule
from textrules.signals import (
    CorpusAverage,
    StrongSignals,
    extract_candidates,
    mask_probabilities,
    strong_signal_words,
)

ALL_UNITS = (1, 2, 3)


@dataclass(frozen=True)
class UnitScores:
    """Per-text category scores from each enabled unit, plus their mean."""

    p1: Optional[np.ndarray]
    p2: Optional[np.ndarray]
    p3: Optional[np.ndarray]
    aggregate: np.ndarray

    def distribution(self) -> CategoryDistribution:
        return CategoryDistribution.from_scores(self.aggregate)


def aggregate_units(parts: Sequence[Optional[np.ndarray]]) -> np.ndarray:
    """Elementwise mean of the present unit vectors."""
    present = [np.asarray(p, dtype=float) for p in parts if p is not None]
    if not present:
        raise ValueError("no unit scores to aggregate")
    return np.mean(present, axis=0)


def _unit_norm(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    return vec / norm if norm > 0 else vec


def _normalize_rows(matrix: np.ndarray) -> np.ndarray:
    if matrix.size == 0:
        return matrix
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return matrix / norms


def and_sentence(words: Sequence[str]) -> str:
    """Rule words joined the way a person would list them."""
    return " and ".join(words)


def split_pairs_alternately(
    pairs: Sequence[tuple[str, str]],
) -> tuple[list[str], list[str]]:
    """Odd-indexed pairs to one word group, even-indexed to the other.

    Pairs stay intact inside their group; a pair's two words never separate.
    """
    first: list[str] = []
    second: list[str] = []
    for i, pair in enumerate(pairs):
        target = first if i % 2 == 0 else second
        target.extend(pair)
    return first, second


class _CategoryState:
    """Everything precomputed for one category's rule."""

    def __init__(self) -> None:
        self.entries: list[VerbalizerEntry] = []
        self.term_matrix = np.zeros((0, 0))
        self.term_supports = np.zeros(0)
        self.pair_matrix = np.zeros((0, 0))
        self.pair_supports = np.zeros(0)
        self.label_vec: Optional[np.ndarray] = None
        self.rule_ssw_d: frozenset[str] = frozenset()
        self.rule_ssw_c: tuple[frozenset[str], frozenset[str]] = (frozenset(), frozenset())


class RuleScorer:
    """Scores texts against one iteration's frozen rules.

    Construction performs all backend calls that depend only on the rules;
    ``score_batch`` afterwards needs just the per-text rows already gathered
    by the signal pass.
    """

    def __init__(
        self,
        backend: Backend,
        template: Template,
        rules: Sequence[LogicalRule],
        anchor_words: Sequence[str],
        neighbor_count: int,
        expansion_count: int,
        signal_count: int,
        strong_count: int,
        corpus_average: Optional[CorpusAverage],
        cache: Optional[EmbeddingCache] = None,
        units: Sequence[int] = ALL_UNITS,
    ):
        if len(rules) != len(anchor_words):
            raise ValueError("need exactly one rule and one anchor word per category")
        bad = set(units) - set(ALL_UNITS)
        if bad or not units:
            raise ValueError(f"units must be a non-empty subset of {ALL_UNITS}")
        self.backend = backend
        self.template = template
        self.rules = list(rules)
        self.anchors = list(anchor_words)
        self.units = tuple(sorted(set(units)))
        self.strong_count = strong_count
        self._states = [_CategoryState() for _ in rules]

        if 1 in self.units:
            self._build_verbalizers(neighbor_count, expansion_count, cache or EmbeddingCache())
        if 2 in self.units:
            self._build_term_embeddings()
        if 3 in self.units:
            if corpus_average is None:
                raise ValueError("unit 3 needs the corpus average for rule sentences")
            self._build_rule_signals(corpus_average, signal_count, strong_count)

    # -- construction ------------------------------------------------------

    def _build_verbalizers(
        self, neighbor_count: int, expansion_count: int, cache: EmbeddingCache
    ) -> None:
        built: dict[str, VerbalizerEntry] = {}
        vocab = self.backend.vocabulary
        for state, rule, anchor in zip(self._states, self.rules, self.anchors):
            keywords = [anchor]
            for word in rule.disjunctive_words(limit=expansion_count):
                if word not in keywords and word in vocab:
                    keywords.append(word)
            for keyword in keywords:
                if keyword not in built:
                    built[keyword] = build_entry(self.backend, keyword, neighbor_count, cache)
                state.entries.append(built[keyword])

    def _build_term_embeddings(self) -> None:
        # One batched embed call for every rule-word carrier sentence.
        sentences: list[str] = []
        slots: list[tuple[int, str, int]] = []
        for z, rule in enumerate(self.rules):
            for k, term in enumerate(rule.disjunctive):
                slots.append((z, "term", k))
                sentences.append(self.template.word_sentence(term.word))
            for k, pair in enumerate(rule.conjunctive):
                slots.append((z, "pair1", k))
                sentences.append(self.template.word_sentence(pair.words[0]))
                slots.append((z, "pair2", k))
                sentences.append(self.template.word_sentence(pair.words[1]))
            slots.append((z, "label", 0))
            sentences.append(self.template.word_sentence(self.anchors[z]))
        embedded = self.backend.embed_sentences(sentences)
        dim = embedded.shape[1]

        member_vecs: dict[tuple[int, int, int], np.ndarray] = {}
        for (z, kind, k), row in zip(slots, embedded):
            state = self._states[z]
            if kind == "term":
                if state.term_matrix.shape[0] == 0:
                    n_terms = len(self.rules[z].disjunctive)
                    state.term_matrix = np.zeros((n_terms, dim))
                    state.term_supports = np.array(
                        [t.support for t in self.rules[z].disjunctive]
                    )
                state.term_matrix[k] = row
            elif kind == "pair1":
                member_vecs[(z, k, 0)] = row
            elif kind == "pair2":
                member_vecs[(z, k, 1)] = row
            else:
                state.label_vec = _unit_norm(row)

        for z, rule in enumerate(self.rules):
            state = self._states[z]
            state.term_matrix = _normalize_rows(state.term_matrix)
            if rule.conjunctive:
                blended = np.zeros((len(rule.conjunctive), dim))
                for k, pair in enumerate(rule.conjunctive):
                    s1, s2 = pair.member_supports
                    total = s1 + s2
                    w1 = s1 / total if total > 0 else 0.5
                    blended[k] = w1 * member_vecs[(z, k, 0)] + (1.0 - w1) * member_vecs[(z, k, 1)]
                state.pair_matrix = _normalize_rows(blended)
                state.pair_supports = np.array([p.support for p in rule.conjunctive])

    def _build_rule_signals(
        self, average: CorpusAverage, signal_count: int, strong_count: int
    ) -> None:
        prompts: list[str] = []
        slots: list[tuple[int, str]] = []
        for z, rule in enumerate(self.rules):
            if rule.disjunctive:
                slots.append((z, "d"))
                prompts.append(self.template.fill(and_sentence(rule.disjunctive_words())))
            group1, group2 = split_pairs_alternately([p.words for p in rule.conjunctive])
            if group1:
                slots.append((z, "c1"))
                prompts.append(self.template.fill(and_sentence(group1)))
            if group2:
                slots.append((z, "c2"))
                prompts.append(self.template.fill(and_sentence(group2)))
        if not prompts:
            return
        probs = mask_probabilities(self.backend.mask_logits(prompts))
        vocab = self.backend.vocabulary
        version = self.backend.version
        for (z, which), row in zip(slots, probs):
            cands = extract_candidates(f"rule-{z}-{which}", row, signal_count)
            strong = strong_signal_words(cands, average, strong_count, version, vocab)
            state = self._states[z]
            if which == "d":
                state.rule_ssw_d = strong.as_set()
            elif which == "c1":
                state.rule_ssw_c = (strong.as_set(), state.rule_ssw_c[1])
            else:
                state.rule_ssw_c = (state.rule_ssw_c[0], strong.as_set())

    # -- per-text scoring --------------------------------------------------

    def unit1(self, logit_row: np.ndarray) -> np.ndarray:
        raw = np.array(
            [max(e.score(logit_row) for e in state.entries) for state in self._states]
        )
        return softmax(raw)

    def unit2(self, text_embedding: np.ndarray) -> np.ndarray:
        f_d = _unit_norm(np.asarray(text_embedding, dtype=float))
        out = np.empty(len(self._states))
        for z, state in enumerate(self._states):
            es_d = -1.0
            if state.term_matrix.shape[0] > 0:
                cosines = state.term_matrix @ f_d
                es_d = float(state.term_supports @ cosines) / state.term_matrix.shape[0]
            es_c = -1.0
            if state.pair_matrix.shape[0] > 0:
                cosines = state.pair_matrix @ f_d
                es_c = float(state.pair_supports @ cosines) / state.pair_matrix.shape[0]
            if state.term_matrix.shape[0] == 0 and state.pair_matrix.shape[0] == 0:
                out[z] = float(state.label_vec @ f_d) if state.label_vec is not None else -1.0
            else:
                out[z] = max(es_d, es_c)
        return out

    def unit3_raw(self, ssw: frozenset[str]) -> np.ndarray:
        """Overlap scores before the cross-category softmax; each in [0, 2]."""
        out = np.empty(len(self._states))
        for z, state in enumerate(self._states):
            os_d = len(ssw & state.rule_ssw_d) / self.strong_count
            g1, g2 = state.rule_ssw_c
            r1 = len(ssw & g1) / self.strong_count if g1 else 0.0
            r2 = len(ssw & g2) / self.strong_count if g2 else 0.0
            out[z] = os_d + max(r1, r2)
        return out

    def score_batch(
        self,
        logit_rows: Optional[np.ndarray],
        text_embeddings: Optional[np.ndarray],
        strong_signals: Optional[Sequence[StrongSignals]],
    ) -> list[UnitScores]:
        """Score many texts; pass None for data a disabled unit does not need."""
        sizes = set()
        if 1 in self.units:
            if logit_rows is None:
                raise ValueError("unit 1 enabled but no logit rows given")
            sizes.add(len(logit_rows))
        if 2 in self.units:
            if text_embeddings is None:
                raise ValueError("unit 2 enabled but no text embeddings given")
            sizes.add(len(text_embeddings))
        if 3 in self.units:
            if strong_signals is None:
                raise ValueError("unit 3 enabled but no strong signal words given")
            sizes.add(len(strong_signals))
        if len(sizes) != 1:
            raise ValueError(f"inconsistent batch sizes across units: {sorted(sizes)}")
        count = sizes.pop()

        p3_all: Optional[np.ndarray] = None
        if 3 in self.units:
            raw = np.stack([self.unit3_raw(s.as_set()) for s in strong_signals])
            p3_all = softmax(raw, axis=1)

        results = []
        for i in range(count):
            p1 = self.unit1(logit_rows[i]) if 1 in self.units else None
            p2 = self.unit2(text_embeddings[i]) if 2 in self.units else None
            p3 = p3_all[i] if p3_all is not None else None
            results.append(
                UnitScores(p1=p1, p2=p2, p3=p3, aggregate=aggregate_units((p1, p2, p3)))
            )
        return results
