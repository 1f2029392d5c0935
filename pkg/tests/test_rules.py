"""Confidence partitioning, frequent-pattern mining, and rule composition.

The partition and mining functions both have small exhaustive oracles here;
the acceptance suite reruns them at the full advertised case counts.
"""

import math
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from textrules.rules import (
    ConjunctivePair,
    DisjunctiveTerm,
    LogicalRule,
    Partition,
    compose_rule,
    confidence,
    filter_conflicting_pairs,
    mine_category_rules,
    mine_frequent_items,
    mine_frequent_pairs,
    partition_by_confidence,
    partition_sse,
)


def segment_sse(chunk):
    mean = sum(chunk) / len(chunk)
    return sum((x - mean) ** 2 for x in chunk)


def best_contiguous_sse(values):
    """Exhaustive optimum over all contiguous 3-way splits (descending sort)."""
    vals = sorted(values, reverse=True)
    n = len(vals)
    best = math.inf
    for i in range(1, n - 1):
        for j in range(i + 1, n):
            sse = segment_sse(vals[:i]) + segment_sse(vals[i:j]) + segment_sse(vals[j:])
            best = min(best, sse)
    return best


def brute_items(transactions, threshold):
    universe = sorted(set().union(frozenset(), *transactions))
    n = len(transactions)
    out = [
        (w, sum(1 for t in transactions if w in t) / n)
        for w in universe
    ]
    out = [(w, s) for w, s in out if s >= threshold]
    out.sort(key=lambda pair: (-pair[1], pair[0]))
    return out


def brute_pairs(transactions, threshold):
    universe = sorted(set().union(frozenset(), *transactions))
    n = len(transactions)
    out = []
    for a, b in combinations(universe, 2):
        sup = sum(1 for t in transactions if a in t and b in t) / n
        if sup >= threshold:
            out.append(((a, b), sup))
    out.sort(key=lambda entry: (-entry[1], entry[0]))
    return out


def random_transactions(rng, max_transactions=12, max_items=8):
    alphabet = [chr(ord("a") + i) for i in range(rng.integers(2, max_items + 1))]
    count = int(rng.integers(1, max_transactions + 1))
    out = []
    for _ in range(count):
        mask = rng.random(len(alphabet)) < rng.uniform(0.2, 0.8)
        out.append(frozenset(w for w, keep in zip(alphabet, mask) if keep))
    return out


# -- confidence --------------------------------------------------------------


def test_confidence_is_top_two_gap():
    assert confidence([0.5, 0.3, 0.2]) == pytest.approx(0.2)
    assert confidence([0.4, 0.4, 0.2]) == 0.0


def test_confidence_needs_two_scores():
    with pytest.raises(ValueError):
        confidence([1.0])


def test_confidence_never_negative():
    rng = np.random.default_rng(13)
    for _ in range(300):
        scores = rng.random(rng.integers(2, 8))
        assert confidence(scores) >= 0.0


# -- partitioning ------------------------------------------------------------


def test_partition_three_obvious_bands():
    scores = [("a", 0.90), ("b", 0.88), ("c", 0.50), ("d", 0.48), ("e", 0.10)]
    part = partition_by_confidence(scores)
    assert part.band_ids("d1") == ("a", "b")
    assert part.band_ids("d2") == ("c", "d")
    assert part.band_ids("d3") == ("e",)


def test_partition_is_input_order_independent():
    scores = [("a", 0.90), ("b", 0.88), ("c", 0.50), ("d", 0.48), ("e", 0.10)]
    shuffled = [scores[i] for i in (3, 0, 4, 1, 2)]
    assert partition_by_confidence(shuffled) == partition_by_confidence(scores)


def test_partition_single_value_degenerates():
    part = partition_by_confidence([("a", 0.5), ("b", 0.5), ("c", 0.5)])
    assert part.band_ids("d1") == ("a", "b", "c")
    assert part.d2 == () and part.d3 == ()


def test_partition_two_values_degenerate():
    part = partition_by_confidence([("a", 0.9), ("b", 0.1), ("c", 0.9)])
    assert part.band_ids("d1") == ("a", "c")
    assert part.band_ids("d2") == ("b",)
    assert part.d3 == ()


def test_partition_short_lists():
    part = partition_by_confidence([("only", 0.4)])
    assert part.band_ids("d1") == ("only",)
    with pytest.raises(ValueError):
        partition_by_confidence([])


def test_partition_matches_exhaustive_optimum():
    rng = np.random.default_rng(99)
    for _ in range(60):
        n = int(rng.integers(3, 16))
        values = rng.random(n)
        scores = [(f"t{i}", float(v)) for i, v in enumerate(values)]
        part = partition_by_confidence(scores)
        got = partition_sse(part)
        want = best_contiguous_sse(values.tolist())
        assert got == pytest.approx(want, abs=1e-9)


def test_partition_bands_are_ordered_and_exhaustive():
    rng = np.random.default_rng(100)
    for _ in range(60):
        n = int(rng.integers(1, 16))
        scores = [(f"t{i}", float(v)) for i, v in enumerate(rng.random(n))]
        part = partition_by_confidence(scores)
        all_ids = part.band_ids("d1") + part.band_ids("d2") + part.band_ids("d3")
        assert sorted(all_ids) == sorted(s[0] for s in scores)
        bands = [[v for _, v in band] for band in (part.d1, part.d2, part.d3)]
        for upper, lower in zip(bands, bands[1:]):
            if upper and lower:
                assert min(upper) >= max(lower)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=15))
def test_partition_ordering_invariant_property(values):
    scores = [(f"t{i}", v) for i, v in enumerate(values)]
    part = partition_by_confidence(scores)
    flat = [v for band in (part.d1, part.d2, part.d3) for _, v in band]
    assert flat == sorted(flat, reverse=True)


# -- mining ------------------------------------------------------------------


def test_mine_items_hand_case():
    transactions = [
        frozenset({"game", "team"}),
        frozenset({"game"}),
        frozenset({"game", "goal"}),
        frozenset({"goal"}),
    ]
    got = mine_frequent_items(transactions, 0.5)
    assert got == [("game", 0.75), ("goal", 0.5)]


def test_mine_items_threshold_validation():
    for bad in (0.0, -0.1, 1.2):
        with pytest.raises(ValueError):
            mine_frequent_items([frozenset({"a"})], bad)


def test_mine_items_empty_transactions():
    assert mine_frequent_items([], 0.5) == []


def test_mine_pairs_hand_case():
    transactions = [
        frozenset({"merger", "acquisition", "stock"}),
        frozenset({"merger", "acquisition"}),
        frozenset({"stock"}),
        frozenset({"merger"}),
    ]
    got = mine_frequent_pairs(transactions, 0.5)
    assert got == [(("acquisition", "merger"), 0.5)]


def test_mine_pairs_respects_downward_closure():
    # "rare" appears with "common" once; both words must clear the threshold
    # before the pair is even counted.
    transactions = [
        frozenset({"common", "rare"}),
        frozenset({"common"}),
        frozenset({"common"}),
        frozenset({"common"}),
    ]
    assert mine_frequent_pairs(transactions, 0.5) == []


def test_mining_matches_brute_force():
    rng = np.random.default_rng(7)
    for _ in range(80):
        transactions = random_transactions(rng)
        n = len(transactions)
        if rng.random() < 0.5:
            threshold = float(rng.integers(1, n + 1)) / n  # boundary-exact
        else:
            threshold = float(rng.uniform(0.05, 1.0))
        assert mine_frequent_items(transactions, threshold) == brute_items(
            transactions, threshold
        )
        assert mine_frequent_pairs(transactions, threshold) == brute_pairs(
            transactions, threshold
        )


def test_pair_support_never_exceeds_member_support():
    rng = np.random.default_rng(8)
    for _ in range(40):
        transactions = random_transactions(rng)
        items = dict(mine_frequent_items(transactions, 0.1))
        for (a, b), sup in mine_frequent_pairs(transactions, 0.1):
            assert a < b  # canonical member order
            assert sup <= items[a] + 1e-12
            assert sup <= items[b] + 1e-12


def test_filter_conflicting_pairs():
    pairs = [(("goal", "penalty"), 0.7), (("acquisition", "merger"), 0.6)]
    kept = filter_conflicting_pairs(pairs, other_category_items=[["goal"], ["cup"]])
    assert kept == [(("acquisition", "merger"), 0.6)]
    assert filter_conflicting_pairs(pairs, other_category_items=[]) == pairs


# -- rule composition --------------------------------------------------------


def test_compose_rule_caps_and_orders():
    items = [("b", 0.5), ("a", 0.9), ("c", 0.5)]
    pairs = [(("x", "y"), 0.4), (("p", "q"), 0.8)]
    rule = compose_rule(
        category=1,
        label_name="sports",
        items=items,
        pairs=pairs,
        max_items=2,
        max_pairs=1,
        pair_member_supports={"p": 0.9, "q": 0.85},
    )
    assert [t.word for t in rule.disjunctive] == ["a", "b"]  # ties alphabetical
    assert [p.words for p in rule.conjunctive] == [("p", "q")]
    assert rule.conjunctive[0].member_supports == (0.9, 0.85)
    assert not rule.fallback


def test_compose_rule_bans_foreign_labels():
    rule = compose_rule(
        category=0,
        label_name="sports",
        items=[("business", 0.9), ("game", 0.8)],
        pairs=[(("bank", "business"), 0.5)],
        max_items=5,
        max_pairs=5,
        pair_member_supports={},
        foreign_label_names=["business", "politics"],
    )
    assert [t.word for t in rule.disjunctive] == ["game"]
    assert rule.conjunctive == ()
    assert rule.label_conflicts == ("business",)


def test_compose_rule_own_label_never_banned():
    rule = compose_rule(
        category=0,
        label_name="sports",
        items=[("sports", 0.9)],
        pairs=[],
        max_items=5,
        max_pairs=5,
        pair_member_supports={},
        foreign_label_names=["sports", "business"],
    )
    assert [t.word for t in rule.disjunctive] == ["sports"]


def test_compose_rule_fallback():
    rule = compose_rule(
        category=2,
        label_name="weather",
        items=[],
        pairs=[],
        max_items=3,
        max_pairs=3,
        pair_member_supports={},
    )
    assert rule.fallback
    assert rule.disjunctive == (DisjunctiveTerm(word="weather", support=1.0),)
    assert rule.conjunctive == ()


def test_compose_rule_size_validation():
    with pytest.raises(ValueError):
        compose_rule(0, "x", [], [], max_items=0, max_pairs=1, pair_member_supports={})


def test_rule_payload_round_trip():
    rule = LogicalRule(
        category=3,
        disjunctive=(DisjunctiveTerm("game", 0.9), DisjunctiveTerm("team", 0.4)),
        conjunctive=(ConjunctivePair(("goal", "penalty"), 0.3, (0.5, 0.45)),),
        fallback=False,
        label_conflicts=("business",),
    )
    assert LogicalRule.from_payload(rule.to_payload()) == rule
    assert rule.disjunctive_words() == ("game", "team")
    assert rule.disjunctive_words(limit=1) == ("game",)


def test_mine_category_rules_cross_exclusion():
    """A pair word frequent in another category's middle band kills the pair."""
    sports_d1 = [frozenset({"game", "team"}), frozenset({"game"})]
    sports_d2 = [
        frozenset({"goal", "penalty"}),
        frozenset({"goal", "penalty"}),
        frozenset({"goal"}),
    ]
    business_d1 = [frozenset({"stock"}), frozenset({"stock", "bank"})]
    business_d2 = [
        frozenset({"merger", "acquisition", "goal"}),
        frozenset({"merger", "acquisition", "goal"}),
    ]
    rules = mine_category_rules(
        [(sports_d1, sports_d2), (business_d1, business_d2)],
        label_names=("sports", "business"),
        item_threshold=0.5,
        pair_threshold=0.5,
        max_items=5,
        max_pairs=5,
    )
    sports, business = rules
    assert [t.word for t in sports.disjunctive] == ["game", "team"]
    # "goal" is frequent in business's middle band, so the sports pair dies...
    assert sports.conjunctive == ()
    # ...and business pairs touching "goal" die against sports's band.
    assert [p.words for p in business.conjunctive] == [("acquisition", "merger")]
    assert business.conjunctive[0].member_supports == (1.0, 1.0)


def test_mine_category_rules_can_skip_pairs():
    transactions = [frozenset({"a", "b"})] * 3
    rules = mine_category_rules(
        [(transactions, transactions)],
        label_names=("only",),
        item_threshold=0.5,
        pair_threshold=0.5,
        max_items=5,
        max_pairs=5,
        mine_pairs=False,
    )
    assert rules[0].conjunctive == ()
    assert [t.word for t in rules[0].disjunctive] == ["a", "b"]


def test_mine_category_rules_validates_shape():
    with pytest.raises(ValueError):
        mine_category_rules(
            [([], [])],
            label_names=("a", "b"),
            item_threshold=0.5,
            pair_threshold=0.5,
            max_items=1,
            max_pairs=1,
        )
