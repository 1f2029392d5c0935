"""HTTP model service: masked-LM logits, sentence embeddings, fine-tuning."""

from .config import ServerConfig
from .runtime import DEFAULT_STUB_WORDS, MASK_MARKER, Runtime, StubRuntime, mean_entropy
from .service import create_app

__all__ = [
    "DEFAULT_STUB_WORDS",
    "MASK_MARKER",
    "Runtime",
    "ServerConfig",
    "StubRuntime",
    "create_app",
    "mean_entropy",
]
