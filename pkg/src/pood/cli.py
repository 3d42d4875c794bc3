"""Command-line interface.

Subcommands::

    pood eval       score tables -> ranked reports (JSON, Markdown, CSV)
    pood synth gen  render a synthetic world to a directory
    pood synth run  fit model + scorer on a world, write a score table
    pood sweep      severity sweep (EPD and 1 - AUROC per severity)

Exit codes: 0 success, 1 data or I/O error, 2 usage error. Every output
file embeds the resolved configuration and the tool version; no output
depends on wall-clock time.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .exceptions import PoodError
from .records import (
    Polarity,
    ReferenceScore,
    atomic_write_text,
    compute_reference,
    emit_table,
    ingest_table,
)
from .report import (
    METRICS,
    NO_OOD,
    MethodRun,
    build_correlation_matrix,
    build_ranked_report,
    build_severity_sweep,
    correlation_to_csv,
    render_csv,
    render_markdown,
    report_to_json,
    sweep_to_csv,
)
from .thresholding import ThresholdPolicy, check_n_percent

log = logging.getLogger("pood")


def _n_percent(text: str) -> float:
    try:
        return check_n_percent(float(text))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _level(text: str) -> float:
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"level must lie in (0, 1), got {text}")
    return value


def _resolved_config(args: argparse.Namespace) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k != "func" and not k.startswith("_")}
    return {"tool": "pood", "version": __version__, **cfg}


def _ingest(path: str, polarity: str):
    try:
        return ingest_table(path, polarity=polarity)
    except PoodError as exc:
        raise type(exc)(f"{path}: {exc}") from None


def _comment_lines(config: dict) -> list[str]:
    return [f"pood {__version__}", "config: " + json.dumps(config, sort_keys=True)]


# --- eval ------------------------------------------------------------------------


def cmd_eval(args: argparse.Namespace) -> int:
    config = _resolved_config(args)
    table = _ingest(args.id, args.polarity)
    for path in args.ood:
        table = table.merge(_ingest(path, args.polarity))
    table.require_id()
    log.info("loaded %d records (%d id-test, %d shifts)", len(table), len(table.id_cohort), len(table.shifts))

    reference = (
        ReferenceScore.external(args.reference_score)
        if args.reference_score is not None
        else compute_reference(table)
    )
    if args.no_ood:
        runs = [MethodRun(NO_OOD, table, ThresholdPolicy.no_ood(), reference)]
    else:
        name = args.name or Path(args.id).stem
        runs = [MethodRun(name, table, ThresholdPolicy.tpr(args.tpr), reference)]

    bootstrap = None
    if args.bootstrap:
        bootstrap = {"n_resamples": args.bootstrap, "level": args.level, "seed": args.seed}

    metrics = list(METRICS) if args.metric == "all" else [args.metric]
    out = Path(args.out)
    meta = {"seed": args.seed, "n_percent": args.tpr, "config": config, "version": __version__}
    auroc_report = None
    if any(m != "auroc" for m in metrics):
        auroc_report = build_ranked_report(runs, "auroc", metadata=meta)
    for metric in metrics:
        report = build_ranked_report(runs, metric, bootstrap=bootstrap, metadata=meta)
        companion = auroc_report if metric != "auroc" else None
        atomic_write_text(out / f"report-{metric}.json", report_to_json(report))
        atomic_write_text(out / f"report-{metric}.md", render_markdown(report, companion))
        atomic_write_text(out / f"report-{metric}.csv", render_csv(report, _comment_lines(config)))
        log.info("wrote %s report (ranking: %s)", metric, ", ".join(report.ranking))

    matrix = build_correlation_matrix(runs)
    atomic_write_text(out / "correlation.csv", correlation_to_csv(matrix, _comment_lines(config)))
    log.info("wrote correlation matrix")
    return 0


# --- synth -----------------------------------------------------------------------


def cmd_synth_gen(args: argparse.Namespace) -> int:
    from .synthbench import generate_world, save_world

    config = _resolved_config(args)
    world = generate_world(
        args.n_train, args.n_id_test, args.n_ood, args.seed,
        corruptions=args.corruptions, severities=args.severities, size=args.size,
    )
    log.info("rendered %d train, %d id-test, %d ood images", len(world.train), len(world.id_test), len(world.ood))
    path = save_world(world, args.out, extra={"config": config, "version": __version__})
    log.info("wrote %s", path)
    return 0


def cmd_synth_run(args: argparse.Namespace) -> int:
    from .synthbench import augment_training_set, fit_toy_model, load_world, make_scorer, run_benchmark

    config = _resolved_config(args)
    world = load_world(args.world)
    train = world.train
    if args.augment:
        train = augment_training_set(world.train, seed=args.seed, kinds=args.augment)
        log.info("augmented training set to %d images with %s", len(train), ", ".join(args.augment))
    model = fit_toy_model(train)
    log.info("fitted toy model: bias=%.6g scale=%.6g smoothing=%d", model.bias_, model.scale_, model.smoothing_)
    scorer = make_scorer(args.scorer, model, world.train)
    table = run_benchmark(world, model, scorer, args.metric)
    s0 = compute_reference(table).s0
    comments = _comment_lines(config) + [
        f"model: bias={model.bias_!r} scale={model.scale_!r} smoothing={model.smoothing_}",
        f"id-test reference s0={s0!r}",
    ]
    emit_table(table, args.out, format="csv", comments=comments)
    log.info("wrote %d records to %s", len(table), args.out)
    return 0


# --- sweep -----------------------------------------------------------------------


def cmd_sweep(args: argparse.Namespace) -> int:
    config = _resolved_config(args)
    table = _ingest(args.table, args.polarity)
    reference = ReferenceScore.external(args.reference_score) if args.reference_score is not None else None
    policy = ThresholdPolicy.no_ood() if args.no_ood else ThresholdPolicy.tpr(args.tpr)
    run = MethodRun(NO_OOD if args.no_ood else Path(args.table).stem, table, policy, reference)
    rows = build_severity_sweep(run, cohort=args.cohort)
    atomic_write_text(args.out, sweep_to_csv(rows, _comment_lines(config)))
    log.info("wrote %d severity rows to %s", len(rows), args.out)
    return 0


# --- parser ----------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, required=True, help="seed for all randomness (required)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pood", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"pood {__version__}")
    parser.add_argument("-q", "--quiet", action="store_true", help="only log warnings")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="evaluate one method's score tables")
    p.add_argument("--id", required=True, help="table holding the id-test cohort (CSV or JSON)")
    p.add_argument("--ood", nargs="+", default=[], help="tables with OOD cohorts")
    p.add_argument("--metric", required=True, choices=METRICS + ("all",))
    p.add_argument("--tpr", type=_n_percent, default=95.0, help="ID retention N in percent (default 95)")
    p.add_argument("--reference-score", type=float, default=None,
                   help="external S0 (e.g. the baseline model's ID performance)")
    p.add_argument("--no-ood", action="store_true", help="evaluate without rejection")
    p.add_argument("--bootstrap", type=int, default=0, metavar="B", help="bootstrap resamples (>= 100)")
    p.add_argument("--level", type=_level, default=0.95, help="bootstrap interval level")
    p.add_argument("--name", default=None, help="method name (default: id file stem)")
    p.add_argument("--polarity", choices=[x.value for x in Polarity], default=Polarity.HIGHER.value)
    p.add_argument("--out", required=True, help="output directory")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    synth = sub.add_parser("synth", help="synthetic benchmark")
    ssub = synth.add_subparsers(dest="synth_command", required=True)

    g = ssub.add_parser("gen", help="render a synthetic world")
    g.add_argument("--n-train", type=_positive_int, default=50)
    g.add_argument("--n-id-test", type=_positive_int, default=100)
    g.add_argument("--n-ood", type=_positive_int, default=100, help="images per (corruption, severity)")
    g.add_argument("--corruptions", nargs="+", default=["gaussian-noise"])
    g.add_argument("--severities", nargs="+", type=int, default=[0, 1, 2, 3, 4, 5])
    g.add_argument("--size", type=int, default=64)
    g.add_argument("--out", required=True, help="world directory")
    _add_common(g)
    g.set_defaults(func=cmd_synth_gen)

    r = ssub.add_parser("run", help="score a synthetic world")
    r.add_argument("--world", required=True, help="world directory from 'synth gen'")
    r.add_argument("--scorer", choices=["entropy", "ihf"], default="entropy")
    r.add_argument("--metric", choices=["dsc", "neg-avgfp"], default="dsc")
    r.add_argument("--augment", nargs="+", default=None, metavar="KIND",
                   help="train the model on data augmented with these corruptions")
    r.add_argument("--out", required=True, help="output score table (CSV)")
    _add_common(r)
    r.set_defaults(func=cmd_synth_run)

    s = sub.add_parser("sweep", help="EPD and 1-AUROC per severity")
    s.add_argument("--table", required=True)
    s.add_argument("--tpr", type=_n_percent, default=95.0)
    s.add_argument("--cohort", default=None, help="restrict to one OOD cohort")
    s.add_argument("--no-ood", action="store_true")
    s.add_argument("--reference-score", type=float, default=None)
    s.add_argument("--polarity", choices=[x.value for x in Polarity], default=Polarity.HIGHER.value)
    s.add_argument("--out", required=True, help="output CSV")
    _add_common(s)
    s.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="pood: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except PoodError as exc:
        print(f"pood: error: {exc}", file=sys.stderr)
        return 1
    except (OSError, KeyError) as exc:
        print(f"pood: error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"pood: usage error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
