"""The deterministic fixture backend and its synthetic corpus generator."""

import numpy as np
import pytest

from textrules.backend import BackendError
from textrules.fixture import (
    FixtureBackend,
    FixtureSpec,
    PlantedCategory,
    PlantedHeadline,
    PlantedPair,
    PlantedWord,
    benchmark_setup,
    fixture_spec_for,
    generate_corpus,
    tokenize,
)
from textrules.mathutil import softmax


def two_category_spec(**overrides):
    params = dict(
        seed=5,
        label_names=("sports", "business"),
        category_words=(
            {"sports": 0.2, "game": 0.5, "team": 0.3},
            {"business": 0.2, "stock": 0.5, "bank": 0.3},
        ),
    )
    params.update(overrides)
    return FixtureSpec(**params)


def cosine(a, b):
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def test_tokenize_lowercases_and_splits():
    assert tokenize("The CEO's plan, 2024!") == ["the", "ceo's", "plan", "2024"]


def test_spec_rejects_bad_multinomial():
    with pytest.raises(ValueError, match="sums to"):
        two_category_spec(
            category_words=({"game": 0.5}, {"stock": 0.5, "bank": 0.5})
        )


def test_spec_rejects_negative_probability():
    with pytest.raises(ValueError, match="negative"):
        two_category_spec(
            category_words=({"game": 1.5, "team": -0.5}, {"stock": 1.0})
        )


def test_spec_rejects_mismatched_lengths():
    with pytest.raises(ValueError, match="parallel"):
        two_category_spec(category_words=({"game": 1.0},))


def test_spec_rejects_overlapping_synonym_groups():
    with pytest.raises(ValueError, match="overlap"):
        two_category_spec(synonym_groups=(("game", "match"), ("match", "fixture")))


def test_spec_rejects_out_of_range_knobs():
    with pytest.raises(ValueError, match="noise_level"):
        two_category_spec(noise_level=1.5)
    with pytest.raises(ValueError, match="sharpen_temperature"):
        two_category_spec(sharpen_temperature=0.0)


def test_spec_vocabulary_order_is_stable():
    spec = two_category_spec(
        synonym_groups=(("game", "match"),), extra_vocab=("filler",)
    )
    words = spec.vocabulary_words()
    # Labels first, then planted words in declaration order, then the rest.
    assert words[:2] == ("sports", "business")
    assert words.index("game") < words.index("stock")
    assert "match" in words and "filler" in words
    assert len(words) == len(set(words))


def test_spec_json_round_trip():
    spec = two_category_spec(
        synonym_groups=(("game", "match"),),
        noise_level=0.25,
        sharpen_temperature=0.8,
        extra_vocab=("filler",),
        can_fine_tune=False,
    )
    assert FixtureSpec.from_json(spec.to_json()) == spec


def test_spec_from_file(tmp_path):
    path = tmp_path / "spec.json"
    spec = two_category_spec()
    path.write_text(spec.to_json(), encoding="utf-8")
    assert FixtureSpec.from_file(path) == spec


def test_backend_is_deterministic():
    a = FixtureBackend(two_category_spec(noise_level=0.4))
    b = FixtureBackend(two_category_spec(noise_level=0.4))
    prompts = ["A [MASK] report: game team", "A [MASK] report: stock"]
    assert np.array_equal(a.mask_logits(prompts), b.mask_logits(prompts))
    words = list(a.vocabulary.words)
    assert np.array_equal(a.embed_words(words), b.embed_words(words))


def test_word_embeddings_are_unit_norm():
    backend = FixtureBackend(two_category_spec())
    matrix = backend.embed_words(list(backend.vocabulary.words))
    assert np.allclose(np.linalg.norm(matrix, axis=1), 1.0)


def test_synonyms_embed_closer_than_strangers():
    spec = two_category_spec(synonym_groups=(("game", "team"),))
    backend = FixtureBackend(spec)
    game = backend.embed_word("game")
    team = backend.embed_word("team")
    within = cosine(game, team)
    across = max(
        cosine(game, backend.embed_word(w))
        for w in backend.vocabulary.words
        if w not in ("game", "team")
    )
    assert within > 0.95
    assert within > across


def test_single_word_sentence_matches_word_embedding():
    backend = FixtureBackend(two_category_spec())
    for word in ("game", "stock", "sports"):
        sent = backend.embed_sentence(word)
        assert cosine(sent, backend.embed_word(word)) >= 0.99


def test_unknown_sentence_gets_fallback_vector():
    backend = FixtureBackend(two_category_spec())
    a = backend.embed_sentence("zzz qqq")
    b = backend.embed_sentence("www")
    assert np.array_equal(a, b)  # both all-unknown, same fallback


def test_logits_prefer_present_words():
    backend = FixtureBackend(two_category_spec())
    row = backend.mask_logits(["A [MASK] story: game game team"])[0]
    vocab = backend.vocabulary
    assert row[vocab.index("game")] > row[vocab.index("team")]
    assert row[vocab.index("team")] > row[vocab.index("stock")]


def test_logit_noise_is_per_prompt_deterministic():
    backend = FixtureBackend(two_category_spec(noise_level=0.5))
    one = backend.mask_logits(["A [MASK]: game"])[0]
    two = backend.mask_logits(["A [MASK]: game"])[0]
    other = backend.mask_logits(["A [MASK]: game team"])[0]
    assert np.array_equal(one, two)
    assert not np.array_equal(one, other)


def test_fine_tune_sharpens_logits():
    """One tuning pass at temperature 0.5 doubles every logit."""
    spec = two_category_spec(sharpen_temperature=0.5, noise_level=0.2)
    backend = FixtureBackend(spec)
    prompts = ["A [MASK] piece: game stock"]
    before = backend.mask_logits(prompts)
    status = backend.fine_tune(prompts, [[0.5, 0.5]])
    assert status == "ok"
    assert backend.version == 1
    after = backend.mask_logits(prompts)
    assert np.allclose(after, before * 2.0)
    assert np.argmax(after) == np.argmax(before)


def test_fine_tune_requires_prompts():
    backend = FixtureBackend(two_category_spec())
    with pytest.raises(BackendError):
        backend.fine_tune([], [])


def test_restore_version():
    backend = FixtureBackend(two_category_spec())
    backend.fine_tune(["x [MASK]"], [[0.5, 0.5]])
    baseline = backend.mask_logits(["a [MASK] game"])
    backend.restore_version(0)
    assert backend.version == 0
    backend.restore_version(1)
    assert np.array_equal(backend.mask_logits(["a [MASK] game"]), baseline)
    with pytest.raises(ValueError):
        backend.restore_version(-1)


def test_generate_corpus_is_deterministic():
    plants = (
        PlantedCategory("sports", (PlantedWord("game", 0.5), PlantedWord("team", 0.4))),
        PlantedCategory("business", (PlantedWord("stock", 0.5),)),
    )
    a = generate_corpus(plants, 20, seed=11)
    b = generate_corpus(plants, 20, seed=11)
    assert [r.text for r in a] == [r.text for r in b]
    c = generate_corpus(plants, 20, seed=12)
    assert [r.text for r in a] != [r.text for r in c]


def test_generate_corpus_labels_and_fallback():
    plants = (PlantedCategory("quiet", (PlantedWord("whisper", 0.0),)),)
    corpus = generate_corpus(plants, 5, seed=1)
    # Nothing was drawn, so every text falls back to the label name.
    assert all(rec.text == "quiet" for rec in corpus)
    assert all(rec.gold_label == 0 for rec in corpus)


def test_generate_corpus_pairs_arrive_together():
    plants = (
        PlantedCategory(
            "deals",
            (PlantedWord("firm", 0.3),),
            pairs=(PlantedPair(("merger", "acquisition"), 1.0),),
        ),
    )
    corpus = generate_corpus(plants, 30, seed=2)
    for rec in corpus:
        tokens = rec.text.split()
        assert "merger" in tokens and "acquisition" in tokens


def test_generate_corpus_headline_mode():
    """A certain headline yields only its core words: pairs and body skipped."""
    plants = (
        PlantedCategory(
            "deals",
            (PlantedWord("firm", 0.9),),
            pairs=(PlantedPair(("stake", "buyout"), 0.9),),
            headlines=(PlantedHeadline(("merger", "acquisition"), rate=1.0, body_scale=0.0),),
        ),
    )
    corpus = generate_corpus(plants, 25, seed=3)
    for rec in corpus:
        assert sorted(rec.text.split()) == ["acquisition", "merger"]


def test_generate_corpus_headline_rate_is_roughly_respected():
    plants = (
        PlantedCategory(
            "deals",
            (PlantedWord("firm", 1.0),),
            headlines=(PlantedHeadline(("merger", "acquisition"), rate=0.3, body_scale=0.0),),
        ),
    )
    corpus = generate_corpus(plants, 400, seed=4)
    headline_count = sum(1 for rec in corpus if "firm" not in rec.text.split())
    assert 0.2 < headline_count / 400 < 0.4


def test_fixture_spec_for_accumulates_rates():
    plants = (
        PlantedCategory(
            "deals",
            (PlantedWord("merger", 0.1),),
            pairs=(PlantedPair(("merger", "acquisition"), 0.4),),
            headlines=(PlantedHeadline(("merger", "acquisition"), rate=0.1),),
        ),
    )
    spec = fixture_spec_for(plants, seed=0)
    dist = spec.category_words[0]
    assert sum(dist.values()) == pytest.approx(1.0)
    # merger mass 0.1 + 0.4 + 0.1 vs acquisition 0.4 + 0.1
    assert dist["merger"] == pytest.approx(0.6 / 1.1)
    assert dist["acquisition"] == pytest.approx(0.5 / 1.1)


def test_benchmark_setup_shape():
    setup = benchmark_setup(texts_per_category=10)
    assert len(setup.corpus) == 40
    assert setup.label_names == ("politics", "sports", "business", "technology")
    assert setup.corpus.gold_labels is not None
    backend = FixtureBackend(setup.fixture_spec)
    assert backend.supports_fine_tune


def test_planted_words_recoverable_from_logits():
    """Texts put more mask probability on their own category's exclusive words.

    This is the property that makes the fixture usable as a stand-in for a
    real masked LM: the planted signal is recoverable from the interface
    alone, without peeking at the planted word rates.
    """
    setup = benchmark_setup(texts_per_category=30)
    assert len(setup.corpus) >= 100
    backend = FixtureBackend(setup.fixture_spec)
    vocab = backend.vocabulary

    owners: dict = {}
    for c, dist in enumerate(setup.fixture_spec.category_words):
        for word in dist:
            owners.setdefault(word, set()).add(c)
    exclusive = [
        [vocab.index(w) for w, cats in owners.items() if cats == {c}]
        for c in range(4)
    ]

    prompts = [f"A [MASK] news: {rec.text}" for rec in setup.corpus]
    probs = softmax(backend.mask_logits(prompts), axis=1)
    gold = np.array(setup.corpus.gold_labels)
    mass = np.zeros((4, 4))
    for c in range(4):
        rows = probs[gold == c]
        for z in range(4):
            mass[c, z] = rows[:, exclusive[z]].sum(axis=1).mean()
    for c in range(4):
        for z in range(4):
            if z != c:
                assert mass[c, c] > mass[c, z]
