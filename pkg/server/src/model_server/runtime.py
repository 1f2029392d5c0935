"""Model runtimes behind the HTTP service.

The service layer talks to a ``Runtime`` and nothing else, so tests and
local development can swap the real checkpoints for the deterministic stub.
"""

import hashlib
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

MASK_MARKER = "[MASK]"

# Small word list for the stub: a few plausible label names plus filler, so
# a client can run an end-to-end loop against the stub without extra setup.
DEFAULT_STUB_WORDS = (
    "politics",
    "sports",
    "business",
    "technology",
    "election",
    "senate",
    "game",
    "team",
    "goal",
    "match",
    "stock",
    "market",
    "profit",
    "merger",
    "software",
    "chip",
    "device",
    "network",
    "news",
    "report",
)


@runtime_checkable
class Runtime(Protocol):
    """What the HTTP layer needs from a model implementation."""

    vocab_version: int

    @property
    def words(self) -> tuple[str, ...]: ...

    @property
    def embedding_dim(self) -> int: ...

    def mask_logits(self, prompts: Sequence[str]) -> np.ndarray: ...

    def embed_words(self, words: Sequence[str]) -> np.ndarray: ...

    def embed_sentences(self, texts: Sequence[str]) -> np.ndarray: ...

    def fine_tune(
        self,
        prompts: Sequence[str],
        distributions: Sequence[Sequence[float]],
        epochs: int,
    ) -> None: ...


def mean_entropy(distributions) -> float:
    """Average Shannon entropy of the given probability rows (0 log 0 = 0)."""
    dist = np.asarray(distributions, dtype=float)
    terms = np.where(dist > 0.0, dist * np.log(np.where(dist > 0.0, dist, 1.0)), 0.0)
    return float(-terms.sum(axis=1).mean())


def _unit(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    return vec / norm if norm > 0 else vec


class StubRuntime:
    """Deterministic fake models.

    Logits and embeddings are pseudo-random but fixed by (seed, input), so
    recorded protocol fixtures replay byte-for-byte. ``fine_tune`` records
    the call and bumps an internal generation counter that is folded into
    the logit stream, which makes post-training outputs visibly different.
    Embeddings stay fixed across generations, mirroring the real setup where
    only the masked LM is trained.
    """

    vocab_version = 1

    def __init__(self, words=DEFAULT_STUB_WORDS, embedding_dim=16, seed=0):
        deduped = tuple(dict.fromkeys(words))
        if len(deduped) != len(tuple(words)):
            raise ValueError("stub word list contains duplicates")
        self._words = deduped
        self._dim = int(embedding_dim)
        self._seed = int(seed)
        self.generation = 0
        self.fine_tune_calls: list[dict] = []

    @property
    def words(self) -> tuple[str, ...]:
        return self._words

    @property
    def embedding_dim(self) -> int:
        return self._dim

    def _rng(self, *parts) -> np.random.Generator:
        key = "|".join(str(part) for part in parts).encode("utf-8")
        digest = hashlib.blake2b(key, digest_size=8).digest()
        return np.random.default_rng(int.from_bytes(digest, "big"))

    def mask_logits(self, prompts: Sequence[str]) -> np.ndarray:
        rows = [
            self._rng("logits", self._seed, self.generation, prompt).standard_normal(
                len(self._words)
            )
            for prompt in prompts
        ]
        if not rows:
            return np.zeros((0, len(self._words)))
        return np.stack(rows)

    def _embed(self, kind: str, items: Sequence[str]) -> np.ndarray:
        rows = [
            _unit(self._rng(kind, self._seed, item).standard_normal(self._dim))
            for item in items
        ]
        if not rows:
            return np.zeros((0, self._dim))
        return np.stack(rows)

    def embed_words(self, words: Sequence[str]) -> np.ndarray:
        return self._embed("word", words)

    def embed_sentences(self, texts: Sequence[str]) -> np.ndarray:
        return self._embed("sent", texts)

    def fine_tune(self, prompts, distributions, epochs) -> None:
        self.fine_tune_calls.append(
            {
                "prompts": list(prompts),
                "epochs": int(epochs),
                "target_entropy": mean_entropy(distributions),
            }
        )
        self.generation += 1
