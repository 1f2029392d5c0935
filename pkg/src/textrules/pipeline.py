"""End-to-end orchestration: bootstrap, iterate, dump artifacts.

Each run bootstraps pseudo labels from label names alone, then alternates:
confidence-partition the texts of each category, mine that category's rule
from strong signal words, rescore every text against the mined rules with
the three units, and let the backend refine itself on the most confident
texts. Every iteration leaves a rules dump, a predictions dump, and a
checkpoint on disk; identical config + seed + backend state reproduce all
of them byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from textrules.backend import Backend, RemoteBackend
from textrules.config import ConfigError, RunConfig
from textrules.corpus import CategoryDistribution, Corpus, Metrics, evaluate
from textrules.finetune import FINETUNE_SKIPPED, FinetunePlan, run_finetune, select_subset
from textrules.fixture import FixtureBackend, FixtureSpec
from textrules.labeling import RuleScorer, UnitScores
from textrules.mathutil import softmax
from textrules.prompting import EmbeddingCache, Template, build_entry, resolve_anchor, score_rows
from textrules.rules import LogicalRule, Partition, mine_category_rules, partition_by_confidence
from textrules.signals import (
    CorpusAverage,
    CorpusAverageBuilder,
    SignalCandidates,
    StrongSignals,
    extract_candidates,
    mask_probabilities,
    strong_signal_words,
    transactions_from,
)

logger = logging.getLogger(__name__)

BACKEND_ENV_VAR = "TEXTRULES_BACKEND"
CHECKPOINT_NAME = "checkpoint.json"

# Backend batch size for the desk-scale loop; remote backends chunk again
# internally, so this only bounds local memory.
BATCH = 256


class PipelineError(RuntimeError):
    pass


@dataclass
class PipelineResult:
    config: RunConfig
    pseudo_labels: list[int]
    distributions: list[CategoryDistribution]
    rules: list[LogicalRule]
    metrics_by_iteration: dict[int, Metrics]
    finetune_statuses: dict[int, str]
    out_dir: Path
    elapsed_seconds: float

    @property
    def final_metrics(self) -> Optional[Metrics]:
        if not self.metrics_by_iteration:
            return None
        return self.metrics_by_iteration[max(self.metrics_by_iteration)]


def make_backend(descriptor: str) -> Backend:
    """Backend from a descriptor: a server URL or a fixture spec path."""
    if not descriptor:
        raise PipelineError(
            "no backend configured; set the config 'backend' key, the "
            f"{BACKEND_ENV_VAR} environment variable, or pass --backend"
        )
    if descriptor.startswith(("http://", "https://")):
        return RemoteBackend(descriptor)
    path = Path(descriptor)
    if not path.exists():
        raise PipelineError(f"fixture spec file not found: {descriptor}")
    return FixtureBackend(FixtureSpec.from_file(path))


def resolve_backend(
    config: RunConfig, backend: Optional[Backend | str] = None
) -> Backend:
    """Precedence: explicit argument, then environment, then config."""
    if isinstance(backend, Backend):
        return backend
    if isinstance(backend, str) and backend:
        return make_backend(backend)
    return make_backend(os.environ.get(BACKEND_ENV_VAR) or config.backend)


def _dump_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _dump_jsonl(path: Path, rows: Sequence[dict]) -> None:
    with path.open("w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row, sort_keys=True) + "\n")


def _vector(values: Optional[np.ndarray]) -> Optional[list[float]]:
    if values is None:
        return None
    return [float(v) for v in values]


def _config_fingerprint(config: RunConfig, corpus: Corpus) -> str:
    blob = json.dumps(
        {"config": config.to_dict(), "text_ids": list(corpus.text_ids)},
        sort_keys=True,
    ).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


class _Phases:
    """Per-run state shared across iterations: prompts, caches, anchors."""

    def __init__(self, config: RunConfig, corpus: Corpus, backend: Backend):
        self.config = config
        self.corpus = corpus
        self.backend = backend
        self.template = Template(config.template)
        self.prompts = [self.template.fill(record.text) for record in corpus]
        self.embedding_cache = EmbeddingCache()
        self.anchors = [resolve_anchor(backend, name) for name in config.label_names]
        self._sentence_cache: dict[int, np.ndarray] = {}

    def batched_logits(self) -> np.ndarray:
        rows = [
            self.backend.mask_logits(self.prompts[i : i + BATCH])
            for i in range(0, len(self.prompts), BATCH)
        ]
        return np.concatenate(rows, axis=0)

    def text_embeddings(self) -> np.ndarray:
        version = self.backend.version
        if version not in self._sentence_cache:
            texts = [record.text for record in self.corpus]
            rows = [
                self.backend.embed_sentences(texts[i : i + BATCH])
                for i in range(0, len(texts), BATCH)
            ]
            self._sentence_cache[version] = np.concatenate(rows, axis=0)
        return self._sentence_cache[version]

    def initial_distributions(self) -> list[CategoryDistribution]:
        """Label-names-only scoring: the bootstrap pseudo labels."""
        entries = [
            [build_entry(self.backend, anchor, self.config.neighbor_count, self.embedding_cache)]
            for anchor in self.anchors
        ]
        raw = score_rows(self.batched_logits(), entries)
        probs = softmax(raw, axis=1)
        return [CategoryDistribution.from_scores(row) for row in probs]

    def signal_pass(self) -> tuple[list[StrongSignals], CorpusAverage]:
        """One batched logits sweep: per-text candidates plus corpus average."""
        vocab = self.backend.vocabulary
        version = self.backend.version
        builder = CorpusAverageBuilder(len(vocab))
        candidates: list[SignalCandidates] = []
        records = list(self.corpus)
        for start in range(0, len(self.prompts), BATCH):
            chunk = self.prompts[start : start + BATCH]
            probs = mask_probabilities(self.backend.mask_logits(chunk))
            builder.add(probs)
            for offset, row in enumerate(probs):
                candidates.append(
                    extract_candidates(
                        records[start + offset].id, row, self.config.signal_count
                    )
                )
        average = builder.finish(version)
        strong = [
            strong_signal_words(c, average, self.config.strong_count, version, vocab)
            for c in candidates
        ]
        return strong, average


def _partition_category(
    assigned: list[tuple[str, float]], use_partition: bool
) -> Partition:
    if not assigned:
        return Partition(d1=(), d2=(), d3=())
    if not use_partition:
        ranked = tuple(sorted(assigned, key=lambda p: (-p[1], p[0])))
        return Partition(d1=ranked, d2=ranked, d3=())
    return partition_by_confidence(assigned)


def _mine_iteration_rules(
    config: RunConfig,
    corpus: Corpus,
    distributions: Sequence[CategoryDistribution],
    strong: Sequence[StrongSignals],
    use_partition: bool,
) -> list[LogicalRule]:
    ssw_by_id = {s.text_id: s for s in strong}
    assigned: list[list[tuple[str, float]]] = [[] for _ in config.label_names]
    for record, dist in zip(corpus, distributions):
        assigned[dist.pseudo_label].append((record.id, dist.confidence))

    category_transactions = []
    for texts in assigned:
        part = _partition_category(texts, use_partition)
        d1 = transactions_from([ssw_by_id[i] for i in part.band_ids("d1")])
        d2 = transactions_from([ssw_by_id[i] for i in part.band_ids("d2")])
        category_transactions.append((d1, d2))

    return mine_category_rules(
        category_transactions,
        label_names=config.label_names,
        item_threshold=config.item_threshold,
        pair_threshold=config.pair_threshold,
        max_items=config.max_rule_items,
        max_pairs=config.max_rule_pairs,
        mine_pairs=config.use_conjunctive,
    )


def _prediction_rows(
    corpus: Corpus, scores: Sequence[UnitScores]
) -> tuple[list[dict], list[CategoryDistribution]]:
    rows = []
    dists = []
    for record, unit_scores in zip(corpus, scores):
        dist = unit_scores.distribution()
        dists.append(dist)
        rows.append(
            {
                "text_id": record.id,
                "p1": _vector(unit_scores.p1),
                "p2": _vector(unit_scores.p2),
                "p3": _vector(unit_scores.p3),
                "aggregate": _vector(unit_scores.aggregate),
                "pseudo_label": dist.pseudo_label,
                "confidence": float(dist.confidence),
            }
        )
    return rows, dists


def _metrics_payload(metrics_by_iteration: dict[int, Metrics]) -> dict:
    per_iteration = [
        {
            "iteration": i,
            "micro_f1": metrics_by_iteration[i].micro_f1,
            "macro_f1": metrics_by_iteration[i].macro_f1,
        }
        for i in sorted(metrics_by_iteration)
    ]
    payload = {"per_iteration": per_iteration}
    if per_iteration:
        payload["final"] = per_iteration[-1]
    return payload


def _write_checkpoint(
    out_dir: Path,
    iteration: int,
    fingerprint: str,
    distributions: Sequence[CategoryDistribution],
    backend_version: int,
    statuses: dict[int, str],
) -> None:
    payload = {
        "iteration": iteration,
        "fingerprint": fingerprint,
        "backend_version": backend_version,
        "finetune_statuses": {str(k): v for k, v in statuses.items()},
        "scores": [[float(v) for v in d.scores] for d in distributions],
    }
    _dump_json(out_dir / CHECKPOINT_NAME, payload)


def _load_checkpoint(path: Path, fingerprint: str, backend: Backend):
    payload = json.loads(path.read_text(encoding="utf-8"))
    if payload.get("fingerprint") != fingerprint:
        raise PipelineError(
            "checkpoint was written by a different config or corpus; refusing to resume"
        )
    version = int(payload["backend_version"])
    if hasattr(backend, "restore_version"):
        backend.restore_version(version)
    elif backend.version != version:
        logger.warning(
            "backend version %s differs from checkpointed %s; results may not reproduce",
            backend.version,
            version,
        )
    distributions = [
        CategoryDistribution.from_scores(np.asarray(scores))
        for scores in payload["scores"]
    ]
    statuses = {int(k): v for k, v in payload.get("finetune_statuses", {}).items()}
    return int(payload["iteration"]), distributions, statuses


def run_pipeline(
    config: RunConfig,
    corpus: Corpus,
    out_dir: str | Path,
    backend: Optional[Backend | str] = None,
    resume: Optional[str | Path] = None,
) -> PipelineResult:
    """Run the full self-iterative loop and leave all artifacts in out_dir."""
    started = time.monotonic()
    out_path = Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    engine = resolve_backend(config, backend)
    phases = _Phases(config, corpus, engine)
    fingerprint = _config_fingerprint(config, corpus)
    gold = corpus.gold_labels

    metrics_by_iteration: dict[int, Metrics] = {}
    statuses: dict[int, str] = {}
    start_iteration = 1

    if resume is not None:
        start_iteration, distributions, statuses = _load_checkpoint(
            Path(resume), fingerprint, engine
        )
        start_iteration += 1
        logger.info("resumed after iteration %d", start_iteration - 1)
    else:
        distributions = phases.initial_distributions()
        rows = [
            {
                "text_id": record.id,
                "p1": [float(v) for v in dist.scores],
                "p2": None,
                "p3": None,
                "aggregate": [float(v) for v in dist.scores],
                "pseudo_label": dist.pseudo_label,
                "confidence": float(dist.confidence),
            }
            for record, dist in zip(corpus, distributions)
        ]
        _dump_jsonl(out_path / "predictions_iter0.jsonl", rows)

    if gold is not None:
        labels = [d.pseudo_label for d in distributions]
        metrics_by_iteration[start_iteration - 1] = evaluate(
            labels, gold, len(config.label_names)
        )

    rules: list[LogicalRule] = []
    for iteration in range(start_iteration, config.iterations + 1):
        logger.info("iteration %d/%d", iteration, config.iterations)
        strong, average = phases.signal_pass()
        rules = _mine_iteration_rules(
            config, corpus, distributions, strong, config.use_partition
        )
        _dump_json(
            out_path / f"rules_iter{iteration}.json", [r.to_payload() for r in rules]
        )

        scorer = RuleScorer(
            backend=engine,
            template=phases.template,
            rules=rules,
            anchor_words=phases.anchors,
            neighbor_count=config.neighbor_count,
            expansion_count=config.resolved_expansion,
            signal_count=config.signal_count,
            strong_count=config.strong_count,
            corpus_average=average,
            cache=phases.embedding_cache,
            units=config.units,
        )
        logit_rows = phases.batched_logits() if 1 in config.units else None
        embeddings = phases.text_embeddings() if 2 in config.units else None
        scores = scorer.score_batch(logit_rows, embeddings, strong)
        rows, distributions = _prediction_rows(corpus, scores)
        _dump_jsonl(out_path / f"predictions_iter{iteration}.jsonl", rows)

        if gold is not None:
            labels = [d.pseudo_label for d in distributions]
            metrics_by_iteration[iteration] = evaluate(labels, gold, len(config.label_names))
            logger.info(
                "iteration %d micro-F1 %.4f", iteration, metrics_by_iteration[iteration].micro_f1
            )

        if config.enable_finetune:
            statuses[iteration] = _finetune_phase(
                config, corpus, phases, scores, distributions
            )
        else:
            statuses[iteration] = FINETUNE_SKIPPED

        _write_checkpoint(
            out_path, iteration, fingerprint, distributions, engine.version, statuses
        )

    if gold is not None:
        _dump_json(out_path / "metrics.json", _metrics_payload(metrics_by_iteration))

    return PipelineResult(
        config=config,
        pseudo_labels=[d.pseudo_label for d in distributions],
        distributions=list(distributions),
        rules=rules,
        metrics_by_iteration=metrics_by_iteration,
        finetune_statuses=statuses,
        out_dir=out_path,
        elapsed_seconds=time.monotonic() - started,
    )


def _finetune_phase(
    config: RunConfig,
    corpus: Corpus,
    phases: _Phases,
    scores: Sequence[UnitScores],
    distributions: Sequence[CategoryDistribution],
) -> str:
    scored = [
        (record.id, float(dist.confidence))
        for record, dist in zip(corpus, distributions)
    ]
    selected = set(select_subset(scored, config.finetune_proportion))
    ids, prompts, dists = [], [], []
    for record, prompt, unit_scores in zip(corpus, phases.prompts, scores):
        if record.id not in selected:
            continue
        target = unit_scores.p1 if unit_scores.p1 is not None else unit_scores.aggregate
        total = float(np.sum(target))
        ids.append(record.id)
        prompts.append(prompt)
        dists.append(tuple(float(v) / total for v in target))
    plan = FinetunePlan(
        text_ids=tuple(ids),
        prompts=tuple(prompts),
        distributions=tuple(dists),
        proportion=config.finetune_proportion,
        epochs=config.epochs,
    )
    return run_finetune(phases.backend, plan)


SWEEP_PARAMS = ("Iter", "rule_size", "K2")


def sweep(
    config: RunConfig,
    corpus: Corpus,
    parameter: str,
    values: Sequence[int],
    out_dir: str | Path,
    backend_factory: Optional[Callable[[], Backend]] = None,
) -> dict:
    """Re-run the pipeline for each value of one hyperparameter.

    Every run gets a fresh backend (fixture state must not leak across
    runs) and the same seed; the report maps values to final Micro-F1.
    """
    if parameter not in SWEEP_PARAMS:
        raise ConfigError(f"sweep parameter must be one of {SWEEP_PARAMS}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    if corpus.gold_labels is None:
        raise PipelineError("sweep needs gold labels to report Micro-F1")

    out_path = Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    report_rows = []
    for value in values:
        if parameter == "Iter":
            run_config = config.with_overrides(iterations=int(value))
        elif parameter == "rule_size":
            run_config = config.with_overrides(
                max_rule_items=int(value), max_rule_pairs=int(value)
            )
        else:
            run_config = config.with_overrides(strong_count=int(value))
        run_dir = out_path / f"sweep_{parameter}_{value}"
        engine = backend_factory() if backend_factory is not None else None
        result = run_pipeline(run_config, corpus, run_dir, backend=engine)
        final = result.final_metrics
        report_rows.append(
            {
                "value": int(value),
                "micro_f1": final.micro_f1 if final else None,
                "macro_f1": final.macro_f1 if final else None,
                "out_dir": run_dir.name,
            }
        )
        logger.info("sweep %s=%s micro-F1 %.4f", parameter, value, report_rows[-1]["micro_f1"])
    report = {"parameter": parameter, "runs": report_rows}
    _dump_json(out_path / f"sweep_{parameter}.json", report)
    return report
