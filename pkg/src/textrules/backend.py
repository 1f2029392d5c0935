"""Contract every language-model provider must satisfy, plus the HTTP client.

Backends expose a word-level vocabulary that never changes over their
lifetime, batched masked-position logits, word and sentence embeddings, and
an optional fine-tune step that bumps an integer state version. All read
operations are pure functions of (backend state, inputs); any cache keyed on
the version is invalidated by a fine-tune.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import requests

logger = logging.getLogger(__name__)

MASK_MARKER = "[MASK]"

FINE_TUNE_OK = "ok"
FINE_TUNE_UNSUPPORTED = "unsupported"


class BackendError(RuntimeError):
    """Invalid request to a backend (bad prompt, out-of-vocabulary word)."""


class TransportError(BackendError):
    """The remote backend could not be reached or returned a server error."""


@dataclass(frozen=True)
class Vocabulary:
    """Ordered word list with its inverse index."""

    words: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(set(self.words)) != len(self.words):
            raise ValueError("vocabulary contains duplicate words")
        object.__setattr__(self, "_index", {w: i for i, w in enumerate(self.words)})

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self._index  # type: ignore[attr-defined]

    def index(self, word: str) -> int:
        try:
            return self._index[word]  # type: ignore[attr-defined]
        except KeyError:
            raise BackendError(f"word {word!r} not in backend vocabulary") from None


def check_mask_markers(prompts: Sequence[str], marker: str = MASK_MARKER) -> None:
    for prompt in prompts:
        count = prompt.count(marker)
        if count != 1:
            raise BackendError(
                f"prompt must contain exactly one {marker} marker, found {count}: {prompt!r}"
            )


class Backend:
    """Base class for language-model backends.

    Subclasses implement ``_mask_logits``, ``_embed_words`` and
    ``_embed_sentences``; the public wrappers validate inputs. Reads may be
    issued concurrently, but no read may overlap ``fine_tune`` — the pipeline
    enforces this as an iteration-phase barrier.
    """

    mask_marker = MASK_MARKER

    @property
    def vocabulary(self) -> Vocabulary:
        raise NotImplementedError

    @property
    def version(self) -> int:
        """State version; increments on every successful fine_tune."""
        raise NotImplementedError

    @property
    def supports_fine_tune(self) -> bool:
        return False

    @property
    def embedding_dim(self) -> int:
        return self.embed_words([self.vocabulary.words[0]]).shape[1]

    def mask_logits(self, prompts: Sequence[str]) -> np.ndarray:
        """Masked-position logit rows, one per prompt, over the vocabulary."""
        prompts = list(prompts)
        if not prompts:
            return np.zeros((0, len(self.vocabulary)))
        check_mask_markers(prompts, self.mask_marker)
        out = self._mask_logits(prompts)
        if not np.all(np.isfinite(out)):
            raise BackendError("backend returned non-finite logits")
        return out

    def embed_words(self, words: Sequence[str]) -> np.ndarray:
        words = list(words)
        if not words:
            return np.zeros((0, 0))
        vocab = self.vocabulary
        for word in words:
            if word not in vocab:
                raise BackendError(f"word {word!r} not in backend vocabulary")
        return self._embed_words(words)

    def embed_word(self, word: str) -> np.ndarray:
        return self.embed_words([word])[0]

    def embed_sentences(self, texts: Sequence[str]) -> np.ndarray:
        texts = list(texts)
        if not texts:
            return np.zeros((0, 0))
        for text in texts:
            if not text.strip():
                raise BackendError("cannot embed an empty text")
        return self._embed_sentences(texts)

    def embed_sentence(self, text: str) -> np.ndarray:
        return self.embed_sentences([text])[0]

    def fine_tune(
        self,
        prompts: Sequence[str],
        distributions: Sequence[Sequence[float]],
        epochs: int = 1,
    ) -> str:
        """Refine the backend on (prompt, category distribution) pairs.

        Returns ``"ok"`` or ``"unsupported"``; callers must treat
        "unsupported" as a graceful degradation, not a failure.
        """
        prompts = list(prompts)
        dists = [np.asarray(d, dtype=float) for d in distributions]
        if len(prompts) != len(dists):
            raise BackendError(
                f"fine_tune got {len(prompts)} prompts but {len(dists)} distributions"
            )
        for d in dists:
            if abs(float(d.sum()) - 1.0) > 1e-6:
                raise BackendError("fine_tune distribution does not sum to 1")
        if not self.supports_fine_tune:
            return FINE_TUNE_UNSUPPORTED
        return self._fine_tune(prompts, dists, epochs)

    def _mask_logits(self, prompts: list[str]) -> np.ndarray:
        raise NotImplementedError

    def _embed_words(self, words: list[str]) -> np.ndarray:
        raise NotImplementedError

    def _embed_sentences(self, texts: list[str]) -> np.ndarray:
        raise NotImplementedError

    def _fine_tune(self, prompts: list[str], dists: list[np.ndarray], epochs: int) -> str:
        raise NotImplementedError


class RemoteBackend(Backend):
    """Client for the model-server HTTP/JSON protocol.

    The vocabulary is fetched once and cached; every response's model version
    is checked against the last seen one so that results from different model
    states are never mixed silently within an iteration.
    """

    def __init__(self, base_url: str, timeout: float = 120.0, chunk_size: int = 512):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.chunk_size = chunk_size
        self._session = requests.Session()
        self._vocab: Optional[Vocabulary] = None
        self._version: Optional[int] = None

    @property
    def vocabulary(self) -> Vocabulary:
        if self._vocab is None:
            payload = self._get("/vocab")
            self._vocab = Vocabulary(words=tuple(payload["words"]))
        return self._vocab

    @property
    def version(self) -> int:
        if self._version is None:
            payload = self._get("/health")
            self._version = int(payload["model_version"])
        return self._version

    @property
    def supports_fine_tune(self) -> bool:
        return True

    def _get(self, route: str) -> dict:
        try:
            resp = self._session.get(self.base_url + route, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"GET {route} failed: {exc}") from exc
        return self._payload(resp, route)

    def _post(self, route: str, body: dict) -> dict:
        try:
            resp = self._session.post(self.base_url + route, json=body, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"POST {route} failed: {exc}") from exc
        return self._payload(resp, route)

    def _payload(self, resp: requests.Response, route: str) -> dict:
        if resp.status_code >= 500 or resp.status_code in (503, 409):
            raise TransportError(f"{route} returned {resp.status_code}: {resp.text[:200]}")
        if resp.status_code >= 400:
            raise BackendError(f"{route} rejected request ({resp.status_code}): {resp.text[:200]}")
        payload = resp.json()
        self._track_version(payload, route)
        return payload

    def _track_version(self, payload: dict, route: str) -> None:
        seen = payload.get("model_version")
        if seen is None:
            return
        seen = int(seen)
        if route == "/fine_tune" or self._version is None:
            self._version = seen
        elif seen != self._version:
            raise TransportError(
                f"model version changed mid-phase ({self._version} -> {seen}); "
                "re-read signals before continuing"
            )

    def _chunks(self, items: list, size: int):
        for start in range(0, len(items), size):
            yield items[start : start + size]

    def _mask_logits(self, prompts: list[str]) -> np.ndarray:
        rows = []
        for chunk in self._chunks(prompts, self.chunk_size):
            payload = self._post("/mask_logits", {"prompts": chunk})
            rows.extend(payload["logits"])
        return np.asarray(rows, dtype=float)

    def _embed_words(self, words: list[str]) -> np.ndarray:
        rows = []
        for chunk in self._chunks(words, self.chunk_size):
            payload = self._post("/embed_words", {"words": chunk})
            rows.extend(payload["embeddings"])
        return np.asarray(rows, dtype=float)

    def _embed_sentences(self, texts: list[str]) -> np.ndarray:
        rows = []
        for chunk in self._chunks(texts, self.chunk_size):
            payload = self._post("/embed_sentences", {"texts": chunk})
            rows.extend(payload["embeddings"])
        return np.asarray(rows, dtype=float)

    def _fine_tune(self, prompts: list[str], dists: list[np.ndarray], epochs: int) -> str:
        body = {
            "prompts": prompts,
            "distributions": [d.tolist() for d in dists],
            "epochs": epochs,
        }
        payload = self._post("/fine_tune", body)
        self._version = int(payload["new_version"])
        return FINE_TUNE_OK
