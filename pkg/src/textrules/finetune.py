"""Selecting confident texts and driving the backend's self-refinement.

The pipeline ships only prompts and target distributions; gradient work is
the backend's problem. A backend that cannot fine-tune (or keeps failing
transport) degrades the iteration to rule-only refinement instead of
aborting the run.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from textrules.backend import FINE_TUNE_OK, Backend, TransportError
from textrules.mathutil import entropy

logger = logging.getLogger(__name__)

FINETUNE_DONE = "ok"
FINETUNE_SKIPPED = "skipped"


@dataclass(frozen=True)
class FinetunePlan:
    """What to ship to the backend: prompts with their target distributions."""

    text_ids: tuple[str, ...]
    prompts: tuple[str, ...]
    distributions: tuple[tuple[float, ...], ...]
    proportion: float
    epochs: int

    def __post_init__(self) -> None:
        if not len(self.text_ids) == len(self.prompts) == len(self.distributions):
            raise ValueError("plan fields must be parallel")


def select_subset(
    scored: Sequence[tuple[str, float]], proportion: float
) -> list[str]:
    """Ids of the top ceil(proportion * N) texts by confidence.

    Ties break by text id so the selection is reproducible.
    """
    if not 0.0 < proportion <= 1.0:
        raise ValueError(f"proportion must be in (0, 1], got {proportion}")
    keep = math.ceil(proportion * len(scored))
    ranked = sorted(scored, key=lambda pair: (-pair[1], pair[0]))
    return [text_id for text_id, _ in ranked[:keep]]


def entropy_loss(distributions: Sequence[Sequence[float]]) -> float:
    """Total entropy of the per-text category distributions.

    Minimized when every distribution is one-hot; this is the quantity the
    backend is asked to reduce.
    """
    total = 0.0
    for dist in distributions:
        vec = np.asarray(dist, dtype=float)
        if abs(float(vec.sum()) - 1.0) > 1e-6:
            raise ValueError("distribution does not sum to 1")
        total += entropy(vec)
    return total


def run_finetune(backend: Backend, plan: FinetunePlan, max_retries: int = 2) -> str:
    """Apply the plan; returns "ok" or "skipped" (unsupported / gave up)."""
    if not plan.prompts:
        logger.warning("empty fine-tune plan; skipping")
        return FINETUNE_SKIPPED
    if not backend.supports_fine_tune:
        logger.info("backend does not support fine-tuning; continuing rule-only")
        return FINETUNE_SKIPPED
    attempts = max_retries + 1
    for attempt in range(1, attempts + 1):
        try:
            status = backend.fine_tune(plan.prompts, plan.distributions, epochs=plan.epochs)
        except TransportError as exc:
            if attempt == attempts:
                logger.warning(
                    "fine-tune failed %d times (%s); continuing rule-only", attempts, exc
                )
                return FINETUNE_SKIPPED
            logger.info("fine-tune attempt %d failed (%s); retrying", attempt, exc)
            continue
        if status == FINE_TUNE_OK:
            return FINETUNE_DONE
        logger.info("backend reported fine-tune %r; continuing rule-only", status)
        return FINETUNE_SKIPPED
    return FINETUNE_SKIPPED
