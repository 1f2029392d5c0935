"""Server configuration."""

from dataclasses import dataclass

AGGREGATION_MODES = ("first", "mean")


@dataclass(frozen=True)
class ServerConfig:
    """Checkpoint identifiers and training knobs for the service.

    ``subword_aggregation`` controls how a word that tokenizes into several
    subwords gets one logit: "first" takes the first subword's logit, "mean"
    averages over all of them.
    """

    masked_lm: str = "roberta-base"
    sentence_encoder: str = "sentence-transformers/all-mpnet-base-v2"
    device: str = "cpu"
    max_seq_len: int = 150
    learning_rate: float = 1e-5
    batch_size: int = 8
    default_epochs: int = 7
    subword_aggregation: str = "first"

    def __post_init__(self) -> None:
        if self.max_seq_len <= 0:
            raise ValueError("max_seq_len must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.default_epochs < 1:
            raise ValueError("default_epochs must be at least 1")
        if self.subword_aggregation not in AGGREGATION_MODES:
            raise ValueError(
                f"subword_aggregation must be one of {AGGREGATION_MODES}, "
                f"got {self.subword_aggregation!r}"
            )
