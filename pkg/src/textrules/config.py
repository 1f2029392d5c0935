"""Run configuration: hyperparameters, ablation switches, backend descriptor.

Config files are flat JSON. Both descriptive names and the short keys used
in experiment notes (K0, K1, K2, h1, h2, S, T, Iter) are accepted; short
keys map onto the descriptive attributes below.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Optional

from textrules.prompting import Template

DEFAULT_TEMPLATE = "A [MASK] news: {text}"

# Accepted spellings for config-file keys.
KEY_ALIASES = {
    "K0": "neighbor_count",
    "K1": "signal_count",
    "K2": "strong_count",
    "h1": "item_threshold",
    "h2": "pair_threshold",
    "S": "max_rule_items",
    "T": "max_rule_pairs",
    "Iter": "iterations",
}

# Defaults that shift when the corpus has strongly imbalanced categories.
IMBALANCED_OVERRIDES = {
    "item_threshold": 0.05,
    "pair_threshold": 0.05,
    "finetune_proportion": 0.90,
}


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


@dataclass(frozen=True)
class RunConfig:
    """Everything a pipeline run depends on besides the corpus itself.

    ``backend`` is either an ``http://``/``https://`` server URL or a path
    to a fixture spec JSON file; the TEXTRULES_BACKEND environment variable
    overrides it, and an explicit CLI flag overrides both.
    """

    label_names: tuple[str, ...]
    template: str = DEFAULT_TEMPLATE
    neighbor_count: int = 10
    signal_count: int = 100
    strong_count: int = 20
    item_threshold: float = 0.1
    pair_threshold: float = 0.1
    max_rule_items: int = 10
    max_rule_pairs: int = 10
    iterations: int = 3
    finetune_proportion: float = 0.85
    expansion_count: Optional[int] = None
    epochs: int = 7
    seed: int = 0
    backend: str = ""
    use_conjunctive: bool = True
    use_partition: bool = True
    units: tuple[int, ...] = (1, 2, 3)
    enable_finetune: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "label_names", tuple(self.label_names))
        object.__setattr__(self, "units", tuple(self.units))
        if len(self.label_names) < 2:
            raise ConfigError("need at least two label names")
        if len(set(self.label_names)) != len(self.label_names):
            raise ConfigError("label names must be unique")
        Template(self.template)  # validates slot and mask marker
        for name in ("neighbor_count", "signal_count", "strong_count",
                     "max_rule_items", "max_rule_pairs", "epochs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        for name in ("item_threshold", "pair_threshold", "finetune_proportion"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ConfigError(f"{name} must be in (0, 1], got {value}")
        if self.strong_count > self.signal_count:
            raise ConfigError("strong_count cannot exceed signal_count")
        if self.iterations < 1:
            raise ConfigError("iterations must be at least 1")
        if self.expansion_count is not None and self.expansion_count < 1:
            raise ConfigError("expansion_count must be at least 1 when given")
        if not self.units or set(self.units) - {1, 2, 3}:
            raise ConfigError("units must be a non-empty subset of {1, 2, 3}")

    @property
    def resolved_expansion(self) -> int:
        """Verbalizer expansion width: half the disjunctive size unless set."""
        if self.expansion_count is not None:
            return self.expansion_count
        return max(1, self.max_rule_items // 2)

    def with_overrides(self, **changes) -> "RunConfig":
        return replace(self, **changes)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        data = dict(raw)
        imbalanced = bool(data.pop("imbalanced", False))
        for alias, target in KEY_ALIASES.items():
            if alias in data:
                if target in data:
                    raise ConfigError(f"config sets both {alias!r} and {target!r}")
                data[target] = data.pop(alias)
        if imbalanced:
            for key, value in IMBALANCED_OVERRIDES.items():
                data.setdefault(key, value)
        known = {f for f in cls.__dataclass_fields__}  # type: ignore[attr-defined]
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "label_names" not in data:
            raise ConfigError("config must provide label_names")
        return cls(**data)

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["label_names"] = list(self.label_names)
        out["units"] = list(self.units)
        return out
