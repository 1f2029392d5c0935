"""Mining per-category logical rules from strong signal words.

Each category's assigned texts are split three ways by pseudo-label
confidence. The most trusted band supplies frequent single words (any one of
which indicates the category on its own: the disjunctive sub-rule); the
middle band supplies frequent word pairs (indicative only jointly: the
conjunctive sub-rule). Pairs sharing a word with another category's frequent
items are dropped as confusable, and the survivors compose a small
disjunctive-normal-form rule per category.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np


def confidence(scores: Sequence[float]) -> float:
    """Gap between the two most probable categories.

    A better uniqueness indicator than the top probability alone: a text
    scored [0.4, 0.39, 0.21] is much less settled than [0.4, 0.2, 0.4].
    """
    vec = np.asarray(scores, dtype=float)
    if vec.size < 2:
        raise ValueError("confidence needs at least two category scores")
    top_two = np.sort(vec)[-2:]
    return float(top_two[1] - top_two[0])


@dataclass(frozen=True)
class Partition:
    """Three confidence bands of one category's assigned texts.

    Bands are disjoint, jointly exhaustive, and ordered: every confidence in
    ``d1`` is >= every confidence in ``d2``, and likewise for ``d3``.
    """

    d1: tuple[tuple[str, float], ...]
    d2: tuple[tuple[str, float], ...]
    d3: tuple[tuple[str, float], ...]

    def band_ids(self, band: str) -> tuple[str, ...]:
        return tuple(text_id for text_id, _ in getattr(self, band))


def _segment_sse(prefix: np.ndarray, prefix_sq: np.ndarray, lo: int, hi: int) -> float:
    """Within-segment sum of squared deviations for values[lo:hi]."""
    count = hi - lo
    total = prefix[hi] - prefix[lo]
    total_sq = prefix_sq[hi] - prefix_sq[lo]
    return total_sq - total * total / count


def partition_by_confidence(scores: Sequence[tuple[str, float]]) -> Partition:
    """Optimal three-way 1-D clustering of (text_id, confidence) pairs.

    Optimal 1-D clusters are contiguous in sorted order, so the exact
    minimum within-cluster SSE is found by scanning all split points over
    the descending sort (ties between equal splits go to the earliest split
    pair). Fewer than three distinct scores degenerate to filling d1 then d2
    by descending score.
    """
    if not scores:
        raise ValueError("cannot partition an empty score list")
    ranked = sorted(scores, key=lambda pair: (-pair[1], pair[0]))
    values = np.array([v for _, v in ranked])
    distinct = len(set(values.tolist()))
    if distinct < 3:
        groups: list[list[tuple[str, float]]] = [[], [], []]
        band = -1
        last: Optional[float] = None
        for text_id, value in ranked:
            if value != last:
                band += 1
                last = value
            groups[band].append((text_id, value))
        return Partition(d1=tuple(groups[0]), d2=tuple(groups[1]), d3=tuple(groups[2]))

    n = len(values)
    prefix = np.concatenate(([0.0], np.cumsum(values)))
    prefix_sq = np.concatenate(([0.0], np.cumsum(values * values)))
    best = (np.inf, 1, 2)
    for i in range(1, n - 1):
        head = _segment_sse(prefix, prefix_sq, 0, i)
        if head >= best[0]:
            continue
        for j in range(i + 1, n):
            sse = (
                head
                + _segment_sse(prefix, prefix_sq, i, j)
                + _segment_sse(prefix, prefix_sq, j, n)
            )
            if sse < best[0]:
                best = (sse, i, j)
    _, i, j = best
    return Partition(d1=tuple(ranked[:i]), d2=tuple(ranked[i:j]), d3=tuple(ranked[j:]))


def partition_sse(partition: Partition) -> float:
    """Within-cluster SSE of an existing partition (diagnostics and tests)."""
    total = 0.0
    for band in (partition.d1, partition.d2, partition.d3):
        if band:
            vals = np.array([v for _, v in band])
            total += float(((vals - vals.mean()) ** 2).sum())
    return total


def _check_threshold(threshold: float) -> None:
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"support threshold must be in (0, 1], got {threshold}")


def mine_frequent_items(
    transactions: Sequence[frozenset[str]], threshold: float
) -> list[tuple[str, float]]:
    """All words present in at least ``threshold`` fraction of transactions.

    Sorted by support descending, ties alphabetically.
    """
    _check_threshold(threshold)
    if not transactions:
        return []
    counts: Counter[str] = Counter()
    for items in transactions:
        counts.update(items)
    n = len(transactions)
    found = [(word, c / n) for word, c in counts.items() if c / n >= threshold]
    found.sort(key=lambda pair: (-pair[1], pair[0]))
    return found


def mine_frequent_pairs(
    transactions: Sequence[frozenset[str]], threshold: float
) -> list[tuple[tuple[str, str], float]]:
    """All unordered word pairs co-occurring in >= ``threshold`` of transactions.

    A pair can only be frequent if both members are (downward closure), so
    candidates are restricted to pairs of frequent single words before
    counting. Pairs are canonicalized with members in alphabetical order;
    output sorts by support descending, ties by pair. Mining stops at length
    2 by design.
    """
    _check_threshold(threshold)
    if not transactions:
        return []
    frequent = {word for word, _ in mine_frequent_items(transactions, threshold)}
    if len(frequent) < 2:
        return []
    counts: Counter[tuple[str, str]] = Counter()
    for items in transactions:
        present = sorted(items & frequent)
        for pair in combinations(present, 2):
            counts[pair] += 1
    n = len(transactions)
    found = [(pair, c / n) for pair, c in counts.items() if c / n >= threshold]
    found.sort(key=lambda entry: (-entry[1], entry[0]))
    return found


def filter_conflicting_pairs(
    pairs: Sequence[tuple[tuple[str, str], float]],
    other_category_items: Sequence[Iterable[str]],
) -> list[tuple[tuple[str, str], float]]:
    """Drop pairs with a member frequent in another category's middle band.

    ``other_category_items`` holds, for every other category, the words
    frequent among that category's D2 transactions; a pair touching any of
    them would point both ways at once.
    """
    conflicted: set[str] = set()
    for items in other_category_items:
        conflicted.update(items)
    return [(pair, sup) for pair, sup in pairs if not (set(pair) & conflicted)]


@dataclass(frozen=True)
class DisjunctiveTerm:
    word: str
    support: float


@dataclass(frozen=True)
class ConjunctivePair:
    words: tuple[str, str]
    support: float
    member_supports: tuple[float, float]


@dataclass(frozen=True)
class LogicalRule:
    """One category's mined DNF rule: strong words OR co-occurring word pairs."""

    category: int
    disjunctive: tuple[DisjunctiveTerm, ...]
    conjunctive: tuple[ConjunctivePair, ...]
    fallback: bool = False
    label_conflicts: tuple[str, ...] = field(default=())

    def disjunctive_words(self, limit: Optional[int] = None) -> tuple[str, ...]:
        words = tuple(term.word for term in self.disjunctive)
        return words if limit is None else words[:limit]

    def to_payload(self) -> dict:
        payload: dict = {
            "category": self.category,
            "disjunctive": [[t.word, t.support] for t in self.disjunctive],
            "conjunctive": [
                [list(p.words), p.support, p.member_supports[0], p.member_supports[1]]
                for p in self.conjunctive
            ],
        }
        if self.fallback:
            payload["fallback"] = True
        if self.label_conflicts:
            payload["label_conflicts"] = list(self.label_conflicts)
        return payload

    @classmethod
    def from_payload(cls, payload: dict) -> "LogicalRule":
        return cls(
            category=int(payload["category"]),
            disjunctive=tuple(
                DisjunctiveTerm(word=w, support=float(s)) for w, s in payload["disjunctive"]
            ),
            conjunctive=tuple(
                ConjunctivePair(
                    words=(pair[0], pair[1]),
                    support=float(sup),
                    member_supports=(float(s1), float(s2)),
                )
                for pair, sup, s1, s2 in payload["conjunctive"]
            ),
            fallback=bool(payload.get("fallback", False)),
            label_conflicts=tuple(payload.get("label_conflicts", ())),
        )


def compose_rule(
    category: int,
    label_name: str,
    items: Sequence[tuple[str, float]],
    pairs: Sequence[tuple[tuple[str, str], float]],
    max_items: int,
    max_pairs: int,
    pair_member_supports: Mapping[str, float],
    foreign_label_names: Iterable[str] = (),
) -> LogicalRule:
    """Top items and pairs by support become the category's DNF rule.

    Words equal to another category's label name are dropped from both
    sub-rules (and recorded on the rule). If nothing at all survives, the
    rule falls back to the category's own label name as a lone disjunctive
    term with support 1.0, flagged so reports can show it.
    """
    if max_items < 1 or max_pairs < 1:
        raise ValueError("rule size limits must be at least 1")
    banned = set(foreign_label_names) - {label_name}

    kept_items = [(w, s) for w, s in items if w not in banned]
    kept_pairs = [(p, s) for p, s in pairs if not (set(p) & banned)]
    conflicts = sorted(
        {w for w, _ in items if w in banned}
        | {w for p, _ in pairs for w in p if w in banned}
    )

    kept_items.sort(key=lambda pair: (-pair[1], pair[0]))
    kept_pairs.sort(key=lambda entry: (-entry[1], entry[0]))
    disjunctive = tuple(
        DisjunctiveTerm(word=w, support=s) for w, s in kept_items[:max_items]
    )
    conjunctive = tuple(
        ConjunctivePair(
            words=pair,
            support=sup,
            member_supports=(
                float(pair_member_supports.get(pair[0], 0.0)),
                float(pair_member_supports.get(pair[1], 0.0)),
            ),
        )
        for pair, sup in kept_pairs[:max_pairs]
    )
    if not disjunctive and not conjunctive:
        return LogicalRule(
            category=category,
            disjunctive=(DisjunctiveTerm(word=label_name, support=1.0),),
            conjunctive=(),
            fallback=True,
            label_conflicts=tuple(conflicts),
        )
    return LogicalRule(
        category=category,
        disjunctive=disjunctive,
        conjunctive=conjunctive,
        fallback=False,
        label_conflicts=tuple(conflicts),
    )


def mine_category_rules(
    category_transactions: Sequence[tuple[Sequence[frozenset[str]], Sequence[frozenset[str]]]],
    label_names: Sequence[str],
    item_threshold: float,
    pair_threshold: float,
    max_items: int,
    max_pairs: int,
    mine_pairs: bool = True,
) -> list[LogicalRule]:
    """Full mining pass over all categories, including cross-category exclusion.

    ``category_transactions[z]`` is the pair (D1 transactions, D2
    transactions) for category z. The exclusion step needs every category's
    D2 frequent items, so this is the join point. ``mine_pairs=False`` turns
    conjunctive mining off entirely (the rules keep only disjunctive terms).
    """
    if len(category_transactions) != len(label_names):
        raise ValueError("one (d1, d2) transaction pair required per category")
    d2_items = [
        mine_frequent_items(d2, pair_threshold) for _, d2 in category_transactions
    ]
    rules = []
    for z, (d1, d2) in enumerate(category_transactions):
        items = mine_frequent_items(d1, item_threshold)
        pairs = mine_frequent_pairs(d2, pair_threshold) if mine_pairs else []
        others = [
            [w for w, _ in d2_items[other]]
            for other in range(len(label_names))
            if other != z
        ]
        pairs = filter_conflicting_pairs(pairs, others)
        rules.append(
            compose_rule(
                category=z,
                label_name=label_names[z],
                items=items,
                pairs=pairs,
                max_items=max_items,
                max_pairs=max_pairs,
                pair_member_supports=dict(d2_items[z]),
                foreign_label_names=[n for i, n in enumerate(label_names) if i != z],
            )
        )
    return rules
