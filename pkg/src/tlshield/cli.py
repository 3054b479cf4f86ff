"""Command-line front end: tlshield check | train | eval | oracle | report.

Exit codes: 0 success, 2 validation failure (including usage errors from
argument parsing), 3 language-equivalence counterexample, 1 other runtime
failure.  ``TLSHIELD_SEED`` overrides the config seed for train/eval.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import data as fixture_data
from .automaton import AutomatonError, parse_automaton
from .equiv import check_equivalence
from .ltl import LtlError, parse_ltl


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tlshield",
        description="Train and audit safe LTL-constrained controllers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_check = sub.add_parser("check", help="validate an automaton file; optionally check language agreement with a formula")
    p_check.add_argument("automaton", help="automaton file path or packaged fixture name")
    p_check.add_argument("--ltl", help="formula whose language the automaton should accept")
    p_check.add_argument("--prefix", type=int, default=3, help="max lasso prefix length")
    p_check.add_argument("--cycle", type=int, default=4, help="max lasso cycle length")

    p_train = sub.add_parser("train", help="run the training loop from a config file")
    p_train.add_argument("config")
    p_train.add_argument("--out", help="output directory (overrides config)")
    p_train.add_argument("--episodes", type=int, help="episode count override")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("checkpoint")
    p_eval.add_argument("config")
    p_eval.add_argument("--runs", type=_positive_int, default=200)
    p_eval.add_argument("--dump-trajectories", help="write per-run trajectory CSVs here")

    p_oracle = sub.add_parser("oracle", help="run the exact theorem suite on finite fixtures")
    p_oracle.add_argument("fixtures", nargs="?", help="fixture descriptor directory (default: packaged)")

    p_report = sub.add_parser("report", help="aggregate a metrics CSV and render figures")
    p_report.add_argument("metrics")
    p_report.add_argument("--out", help="output directory (default: alongside the CSV)")
    p_report.add_argument("--window", type=int, default=20, help="rolling-mean window")
    return parser


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _resolve_automaton(spec: str) -> str:
    path = Path(spec)
    if path.exists():
        return path.read_text()
    return fixture_data.fixture_path(
        spec if spec.endswith(".aut") else spec + ".aut"
    ).read_text()


def cmd_check(args) -> int:
    try:
        text = _resolve_automaton(args.automaton)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        a = parse_automaton(text)
    except AutomatonError as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return 2
    print(
        f"ok: {len(a.states)} states, {len(a.aps)} APs, {a.n_accepting} accepting sets, "
        f"{len(a.unsafe)} unsafe"
    )
    formula = None
    if args.ltl:
        try:
            formula = parse_ltl(args.ltl, set(a.aps))
        except LtlError as exc:
            print(f"validation failed: {exc}", file=sys.stderr)
            return 2
    report = check_equivalence(a, formula, args.prefix, args.cycle)
    if report.counterexample is not None:
        print(f"counterexample: {report.counterexample}")
        return 3
    what = "LDGBA/embedded/LTL" if formula is not None else "LDGBA/embedded"
    print(f"{what} agree on all {report.words_checked} lasso words")
    return 0


def cmd_train(args) -> int:
    from .trainer import load_config, run_training

    cfg = load_config(args.config)
    if os.environ.get("TLSHIELD_SEED"):
        cfg.seed = int(os.environ["TLSHIELD_SEED"])
    if args.episodes:
        cfg.episodes = args.episodes
    result = run_training(cfg, out_dir=args.out)
    last = result.metrics[-1]
    print(f"trained {len(result.metrics)} episodes -> {result.out_dir}")
    print(
        f"final episode: steps={last.steps} return={last.base_return:.3f} "
        f"rounds={last.rounds} interventions={last.interventions} safe={int(last.safe)}"
    )
    print(f"checkpoint: {result.checkpoint}")
    return 0


def cmd_eval(args) -> int:
    from .trainer import evaluate, load_config

    cfg = load_config(args.config)
    if os.environ.get("TLSHIELD_SEED"):
        cfg.seed = int(os.environ["TLSHIELD_SEED"])
    summary = evaluate(args.checkpoint, cfg, args.runs, dump_dir=args.dump_trajectories)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_oracle(args) -> int:
    from .oracle import run_theorem_suite

    fixture_dir = Path(args.fixtures) if args.fixtures else fixture_data.fixture_dir() / "oracle"
    results = run_theorem_suite(fixture_dir)
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        failed += int(not r.passed)
        print(f"[{status}] {r.fixture:20s} {r.check:8s} {r.detail}")
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 1


def cmd_report(args) -> int:
    from .report import write_report

    metrics = Path(args.metrics)
    if not metrics.exists():
        print(f"error: no such file {metrics}", file=sys.stderr)
        return 2
    out_dir = Path(args.out) if args.out else metrics.parent / "report"
    written = write_report(metrics, out_dir, window=args.window)
    for path in written:
        print(path)
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "check": cmd_check,
        "train": cmd_train,
        "eval": cmd_eval,
        "oracle": cmd_oracle,
        "report": cmd_report,
    }
    try:
        return handlers[args.command](args)
    except (AutomatonError, LtlError) as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # surfaced with a diagnostic, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
