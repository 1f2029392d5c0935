"""Command line front end: run, sweep, report."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from textrules.config import RunConfig
from textrules.corpus import load_corpus
from textrules.pipeline import SWEEP_PARAMS, make_backend, run_pipeline, sweep
from textrules.rules import LogicalRule

logger = logging.getLogger(__name__)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="flat JSON config file")
    parser.add_argument("--corpus", required=True, help="corpus file (.jsonl or .csv)")
    parser.add_argument("--out", required=True, help="output directory for artifacts")
    parser.add_argument(
        "--backend",
        default=None,
        help="server URL (http://...) or fixture spec path; overrides config and env",
    )


def _load_inputs(args: argparse.Namespace):
    config = RunConfig.from_file(args.config)
    fmt = "csv" if args.corpus.endswith(".csv") else "jsonl"
    corpus = load_corpus(args.corpus, format=fmt, label_names=config.label_names)
    return config, corpus


def _cmd_run(args: argparse.Namespace) -> int:
    config, corpus = _load_inputs(args)
    result = run_pipeline(
        config, corpus, args.out, backend=args.backend, resume=args.resume
    )
    print(f"finished {config.iterations} iterations in {result.elapsed_seconds:.1f}s")
    final = result.final_metrics
    if final is not None:
        print(f"micro-F1 {final.micro_f1:.4f}  macro-F1 {final.macro_f1:.4f}")
    counts: dict[int, int] = {}
    for label in result.pseudo_labels:
        counts[label] = counts.get(label, 0) + 1
    for z, name in enumerate(config.label_names):
        print(f"  {name}: {counts.get(z, 0)} texts")
    print(f"artifacts in {result.out_dir}")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    config, corpus = _load_inputs(args)
    descriptor = args.backend or config.backend

    def factory():
        return make_backend(descriptor)

    report = sweep(
        config, corpus, args.param, args.values, args.out,
        backend_factory=factory if descriptor else None,
    )
    print(f"{args.param:>10}  micro-F1  macro-F1")
    for row in report["runs"]:
        print(f"{row['value']:>10}  {row['micro_f1']:.4f}    {row['macro_f1']:.4f}")
    return 0


def _format_rule(rule: LogicalRule, name: str) -> str:
    lines = [f"category {rule.category} ({name})"]
    if rule.fallback:
        lines.append("  [fallback: nothing mined, label name only]")
    if rule.label_conflicts:
        lines.append(f"  [dropped foreign label words: {', '.join(rule.label_conflicts)}]")
    for term in rule.disjunctive:
        lines.append(f"  {term.word:<20} support {term.support:.3f}")
    for pair in rule.conjunctive:
        joint = f"{pair.words[0]} AND {pair.words[1]}"
        lines.append(f"  {joint:<20} support {pair.support:.3f}")
    return "\n".join(lines)


def _cmd_report(args: argparse.Namespace) -> int:
    rules_dir = Path(args.rules)
    dumps = sorted(
        rules_dir.glob("rules_iter*.json"),
        key=lambda p: int("".join(ch for ch in p.stem if ch.isdigit()) or 0),
    )
    if not dumps:
        print(f"no rule dumps found in {rules_dir}", file=sys.stderr)
        return 1
    names = {}
    if args.config:
        config = RunConfig.from_file(args.config)
        names = dict(enumerate(config.label_names))
    target = dumps if args.all else dumps[-1:]
    for dump in target:
        print(f"== {dump.name} ==")
        payload = json.loads(dump.read_text(encoding="utf-8"))
        for entry in payload:
            rule = LogicalRule.from_payload(entry)
            print(_format_rule(rule, names.get(rule.category, "?")))
        print()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="textrules",
        description="Weakly supervised text classification via mined word rules",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the full pipeline on a corpus")
    _add_common(p_run)
    p_run.add_argument("--resume", default=None, help="checkpoint file to resume from")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="re-run over one hyperparameter")
    _add_common(p_sweep)
    p_sweep.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    p_sweep.add_argument("--values", required=True, nargs="+", type=int)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_report = sub.add_parser("report", help="pretty-print mined rule dumps")
    p_report.add_argument("--rules", required=True, help="directory with rules_iter*.json")
    p_report.add_argument("--config", default=None, help="config file for label names")
    p_report.add_argument("--all", action="store_true", help="print every iteration")
    p_report.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
