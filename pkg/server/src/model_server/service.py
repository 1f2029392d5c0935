"""HTTP facade: the JSON protocol, response versioning, and the write lock.

Read endpoints run concurrently. A fine-tune takes the write lock for its
whole duration; reads arriving meanwhile get 503 and a second fine-tune gets
409, so a client can never mix outputs from two model versions in one pass.
"""

import logging
import threading
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .config import ServerConfig
from .runtime import MASK_MARKER, Runtime, mean_entropy

logger = logging.getLogger(__name__)

DISTRIBUTION_TOLERANCE = 1e-6


class MaskLogitsRequest(BaseModel):
    prompts: list[str]


class EmbedWordsRequest(BaseModel):
    words: list[str]


class EmbedSentencesRequest(BaseModel):
    texts: list[str]


class FineTuneRequest(BaseModel):
    prompts: list[str]
    distributions: list[list[float]]
    epochs: Optional[int] = None


def _check_prompts(prompts: list[str]) -> None:
    if not prompts:
        raise HTTPException(status_code=400, detail="prompts must be a non-empty list")
    for i, prompt in enumerate(prompts):
        if prompt.count(MASK_MARKER) != 1:
            raise HTTPException(
                status_code=400,
                detail=f"prompt {i} needs exactly one {MASK_MARKER} marker",
            )


def _check_distributions(prompts: list[str], rows: list[list[float]]) -> None:
    if len(rows) != len(prompts):
        raise HTTPException(
            status_code=400,
            detail=f"{len(prompts)} prompts but {len(rows)} distributions",
        )
    widths = {len(row) for row in rows}
    if len(widths) > 1 or widths == {0}:
        raise HTTPException(
            status_code=400, detail="distribution rows must share one non-zero width"
        )
    for i, row in enumerate(rows):
        vec = np.asarray(row, dtype=float)
        if not np.all(np.isfinite(vec)) or np.any(vec < 0.0):
            raise HTTPException(
                status_code=400, detail=f"distribution {i} has invalid entries"
            )
        if abs(float(vec.sum()) - 1.0) > DISTRIBUTION_TOLERANCE:
            raise HTTPException(
                status_code=400, detail=f"distribution {i} does not sum to 1"
            )


def _normalized_rows(matrix: np.ndarray) -> list[list[float]]:
    out = np.asarray(matrix, dtype=float)
    if out.size:
        norms = np.linalg.norm(out, axis=1, keepdims=True)
        out = out / np.where(norms > 0.0, norms, 1.0)
    return out.tolist()


def create_app(runtime: Runtime, config: Optional[ServerConfig] = None) -> FastAPI:
    config = config or ServerConfig()
    app = FastAPI(title="model-server", docs_url=None, redoc_url=None)
    state = app.state
    state.runtime = runtime
    state.config = config
    state.model_version = 0
    state.write_lock = threading.Lock()

    def versioned(payload: dict) -> dict:
        payload["model_version"] = state.model_version
        return payload

    def reject_if_training() -> None:
        if state.write_lock.locked():
            raise HTTPException(
                status_code=503, detail="fine-tune in progress, retry later"
            )

    @app.exception_handler(HTTPException)
    async def _http_error(request, exc):
        return JSONResponse(
            status_code=exc.status_code,
            content={"error": exc.detail, "model_version": state.model_version},
        )

    @app.exception_handler(RequestValidationError)
    async def _bad_body(request, exc):
        return JSONResponse(
            status_code=400,
            content={
                "error": "malformed request body",
                "model_version": state.model_version,
            },
        )

    @app.get("/health")
    def health():
        status = "fine_tuning" if state.write_lock.locked() else "ok"
        return versioned({"status": status})

    @app.get("/vocab")
    def vocab():
        reject_if_training()
        return versioned(
            {"vocab_version": runtime.vocab_version, "words": list(runtime.words)}
        )

    @app.post("/mask_logits")
    def mask_logits(body: MaskLogitsRequest):
        reject_if_training()
        _check_prompts(body.prompts)
        rows = np.asarray(runtime.mask_logits(body.prompts), dtype=float)
        if not np.all(np.isfinite(rows)):
            raise HTTPException(status_code=500, detail="runtime produced non-finite logits")
        return versioned(
            {"vocab_version": runtime.vocab_version, "logits": rows.tolist()}
        )

    @app.post("/embed_words")
    def embed_words(body: EmbedWordsRequest):
        reject_if_training()
        if not body.words:
            raise HTTPException(status_code=400, detail="words must be a non-empty list")
        if any(not word.strip() for word in body.words):
            raise HTTPException(status_code=400, detail="cannot embed a blank word")
        return versioned({"embeddings": _normalized_rows(runtime.embed_words(body.words))})

    @app.post("/embed_sentences")
    def embed_sentences(body: EmbedSentencesRequest):
        reject_if_training()
        if not body.texts:
            raise HTTPException(status_code=400, detail="texts must be a non-empty list")
        if any(not text.strip() for text in body.texts):
            raise HTTPException(status_code=400, detail="cannot embed a blank text")
        return versioned(
            {"embeddings": _normalized_rows(runtime.embed_sentences(body.texts))}
        )

    @app.post("/fine_tune")
    def fine_tune(body: FineTuneRequest):
        _check_prompts(body.prompts)
        _check_distributions(body.prompts, body.distributions)
        epochs = body.epochs if body.epochs is not None else config.default_epochs
        if epochs < 1:
            raise HTTPException(status_code=400, detail="epochs must be at least 1")
        if not state.write_lock.acquire(blocking=False):
            raise HTTPException(status_code=409, detail="another fine-tune is active")
        try:
            logger.info(
                "fine-tune: %d prompts, %d epochs, mean target entropy %.4f",
                len(body.prompts),
                epochs,
                mean_entropy(body.distributions),
            )
            runtime.fine_tune(body.prompts, body.distributions, epochs)
            state.model_version += 1
        finally:
            state.write_lock.release()
        return versioned({"new_version": state.model_version})

    return app
