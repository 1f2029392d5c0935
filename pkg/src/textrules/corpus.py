"""Data model for texts, categories, and predictions, plus ingestion and metrics.

Gold labels live only here: they are read from the input file for the final
evaluation and are never consulted by the mining or labeling stages.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np


class CorpusError(ValueError):
    """Raised for malformed corpus files or invalid evaluation inputs."""


@dataclass(frozen=True)
class Category:
    """A target category, identified by its sole seed word (the label name)."""

    id: int
    label_name: str

    def __post_init__(self) -> None:
        if not self.label_name.strip():
            raise ValueError("category label name must be non-empty")


def make_categories(label_names: Sequence[str]) -> tuple[Category, ...]:
    """Build contiguous categories 0..K-1 from label names."""
    names = [n.strip() for n in label_names]
    if len(set(names)) != len(names):
        raise ValueError("duplicate label names")
    return tuple(Category(i, name) for i, name in enumerate(names))


@dataclass(frozen=True)
class TextRecord:
    id: str
    text: str
    gold_label: Optional[int] = None

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError(f"text {self.id!r} is empty")


@dataclass(frozen=True)
class Corpus:
    """An immutable collection of texts; safe for concurrent read access."""

    records: tuple[TextRecord, ...]
    _by_id: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        by_id = {}
        for rec in self.records:
            if rec.id in by_id:
                raise CorpusError(f"duplicate text id {rec.id!r}")
            by_id[rec.id] = rec
        object.__setattr__(self, "_by_id", by_id)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, text_id: str) -> TextRecord:
        return self._by_id[text_id]

    @property
    def text_ids(self) -> list[str]:
        return [rec.id for rec in self.records]

    @property
    def gold_labels(self) -> Optional[list[int]]:
        """Gold labels in corpus order, or None unless every record has one."""
        labels = [rec.gold_label for rec in self.records]
        if any(lbl is None for lbl in labels):
            return None
        return labels  # type: ignore[return-value]


@dataclass(frozen=True)
class CategoryDistribution:
    """Per-text scores over categories with the derived pseudo label.

    The pseudo label is the argmax (ties broken by lowest category index) and
    the confidence is the gap between the two largest scores.
    """

    scores: tuple[float, ...]
    pseudo_label: int
    confidence: float

    @classmethod
    def from_scores(cls, scores: Iterable[float]) -> "CategoryDistribution":
        vec = np.asarray(list(scores), dtype=float)
        if vec.size < 1:
            raise ValueError("empty score vector")
        if not np.all(np.isfinite(vec)):
            raise ValueError("non-finite score")
        order = np.argsort(-vec, kind="stable")
        top1 = int(order[0])
        conf = float(vec[top1] - vec[int(order[1])]) if vec.size >= 2 else 0.0
        return cls(scores=tuple(float(x) for x in vec), pseudo_label=top1, confidence=conf)


def _resolve_label(raw: str, label_names: Sequence[str], where: str) -> int:
    lookup = {name.strip().lower(): i for i, name in enumerate(label_names)}
    key = raw.strip().lower()
    if key not in lookup:
        raise CorpusError(f"unknown gold label {raw!r} at {where}")
    return lookup[key]


def load_corpus(
    path: str | Path,
    format: str = "jsonl",
    label_names: Optional[Sequence[str]] = None,
) -> Corpus:
    """Load texts from a JSONL or CSV file.

    JSONL rows carry ``id``, ``text`` and an optional ``label`` string; CSV
    files carry an ``id,text[,label]`` header. Label strings are matched
    case-insensitively against ``label_names``; a labeled file without
    configured label names is rejected rather than silently unlabeled.
    """
    path = Path(path)
    if format == "jsonl":
        records = _load_jsonl(path, label_names)
    elif format == "csv":
        records = _load_csv(path, label_names)
    else:
        raise CorpusError(f"unknown corpus format {format!r}")
    if not records:
        raise CorpusError(f"empty corpus: {path}")
    return Corpus(records=tuple(records))


def _load_jsonl(path: Path, label_names: Optional[Sequence[str]]) -> list[TextRecord]:
    records = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(row, dict) or "id" not in row or "text" not in row:
                raise CorpusError(f"{path}:{lineno}: expected object with 'id' and 'text'")
            records.append(_make_record(row, label_names, f"{path}:{lineno}"))
    return records


def _load_csv(path: Path, label_names: Optional[Sequence[str]]) -> list[TextRecord]:
    records = []
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or "id" not in reader.fieldnames or "text" not in reader.fieldnames:
            raise CorpusError(f"{path}:1: CSV header must contain 'id' and 'text'")
        for row in reader:
            where = f"{path}:{reader.line_num}"
            if row.get("id") is None or row.get("text") is None:
                raise CorpusError(f"{where}: missing id or text field")
            records.append(_make_record(row, label_names, where))
    return records


def _make_record(row: dict, label_names: Optional[Sequence[str]], where: str) -> TextRecord:
    gold = None
    raw_label = row.get("label")
    if raw_label is not None and str(raw_label).strip():
        if label_names is None:
            raise CorpusError(f"{where}: file carries labels but no label names were configured")
        gold = _resolve_label(str(raw_label), label_names, where)
    try:
        return TextRecord(id=str(row["id"]), text=str(row["text"]).strip(), gold_label=gold)
    except ValueError as exc:
        raise CorpusError(f"{where}: {exc}") from exc


@dataclass(frozen=True)
class Metrics:
    micro_f1: float
    macro_f1: float


def evaluate(
    predictions: Sequence[int],
    gold: Sequence[int],
    num_categories: Optional[int] = None,
) -> Metrics:
    """Multi-class micro/macro F1.

    A class with zero support in both predictions and gold scores 0 and is
    still included in the macro average, so the metric is deterministic on
    imbalanced subsets.
    """
    if len(predictions) != len(gold):
        raise CorpusError(
            f"length mismatch: {len(predictions)} predictions vs {len(gold)} gold labels"
        )
    if not predictions:
        raise CorpusError("nothing to evaluate")
    pred = np.asarray(predictions, dtype=int)
    true = np.asarray(gold, dtype=int)
    k = num_categories if num_categories is not None else int(max(pred.max(), true.max())) + 1
    if pred.min() < 0 or true.min() < 0 or pred.max() >= k or true.max() >= k:
        raise CorpusError("label id out of range")

    per_class_f1 = []
    for c in range(k):
        tp = int(np.sum((pred == c) & (true == c)))
        fp = int(np.sum((pred == c) & (true != c)))
        fn = int(np.sum((pred != c) & (true == c)))
        denom = 2 * tp + fp + fn
        per_class_f1.append(2 * tp / denom if denom else 0.0)

    micro = float(np.mean(pred == true))  # single-label micro F1 reduces to accuracy
    return Metrics(micro_f1=micro, macro_f1=float(np.mean(per_class_f1)))
