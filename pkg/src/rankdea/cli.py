"""Command line interface.

Every subcommand reads the same panel files (``--inputs``, ``--outputs``,
``--context``), writes its tables as CSV under ``--out-dir`` and prints a
short summary. Exit status is 0 on success, 2 for bad input or configuration
and 3 when a solver or the optimizer fails.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import dynamic
from .data import describe
from .dea import MODELS, efficiency_panel, rank_panel
from .exceptions import IdentifiabilityError, NumericalError, ValidationError
from .iia import CORRELATIONS, iia_experiment
from .panel import COV_TYPES, ESTIMATORS
from .pipeline import (
    PipelineConfig,
    _write_csv,
    drm_frame,
    load_config_panel,
    rankings_frame,
    run_pipeline,
    scores_frame,
    select_covariates,
    worths_frame,
    write_synthetic_fixture,
)

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3


def _global_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("data and run options")
    g.add_argument("--inputs", help="inputs CSV (dmu,period,<vars>)")
    g.add_argument("--outputs", help="outputs CSV")
    g.add_argument("--context", help="contextual variables CSV")
    g.add_argument("--lag-inputs", type=int, default=1, metavar="N")
    g.add_argument("--lag-outputs", type=int, default=0, metavar="N")
    g.add_argument("--lag-context", type=int, default=1, metavar="N")
    g.add_argument("--interpolate", action="store_true", help="fill gaps by a per-DMU linear trend")
    g.add_argument("--out-dir", default="rankdea-report")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--threads", type=int, default=1)
    g.add_argument("-v", "--verbose", action="store_true")
    return p


def _covariate_flags(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--covariates", nargs="+", metavar="NAME", help="subset of contextual variables")
    g.add_argument("--no-covariates", action="store_true", help="fit individual effects only")


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = argparse.ArgumentParser(prog="rankdea", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("describe", parents=[common], help="five-number summaries and correlations")

    p = sub.add_parser("dea", parents=[common], help="efficiency scores for every DMU and period")
    p.add_argument("--model", choices=MODELS, default="h")

    p = sub.add_parser("rank", parents=[common], help="per-period rankings from super-efficiency scores")
    p.add_argument("--model", choices=("ap", "h"), default="h")

    p = sub.add_parser("fit", parents=[common], help="fit the dynamic ranking model")
    _covariate_flags(p)

    p = sub.add_parser("bootstrap", parents=[common], help="fit plus parametric bootstrap errors")
    _covariate_flags(p)
    p.add_argument("--replications", type=int, default=200)

    p = sub.add_parser("iia", parents=[common], help="leave-one-out ranking stability")
    p.add_argument("--model", choices=("ap", "h"), default="h")
    p.add_argument("--correlation", choices=CORRELATIONS, default="pearson")

    p = sub.add_parser("report", parents=[common], help="run the full analysis")
    _covariate_flags(p)
    p.add_argument("--bootstrap", type=int, default=None, metavar="B", help="bootstrap replications")
    p.add_argument("--rank-model", choices=("ap", "h"), default="h")
    p.add_argument("--estimator", choices=ESTIMATORS, default="entity_fe")
    p.add_argument("--cov-type", choices=COV_TYPES, default="hc0")
    p.add_argument("--correlation", choices=CORRELATIONS, default="pearson")

    p = sub.add_parser("fixture", help="write the bundled synthetic panel to a directory")
    p.add_argument("--out-dir", default="rankdea-fixture")
    p.add_argument("--seed", type=int, default=2029)
    return parser


def _config(args) -> PipelineConfig:
    if not args.inputs or not args.outputs:
        raise ValidationError("--inputs and --outputs are required")
    covariates = getattr(args, "covariates", None)
    if getattr(args, "no_covariates", False):
        covariates = []
    return PipelineConfig(
        inputs=args.inputs, outputs=args.outputs, context=args.context, out_dir=args.out_dir,
        lag_inputs=args.lag_inputs, lag_outputs=args.lag_outputs, lag_context=args.lag_context,
        interpolate=args.interpolate, covariates=covariates, seed=args.seed, threads=args.threads,
        bootstrap=getattr(args, "bootstrap", None) if args.command == "report" else None,
        rank_model=getattr(args, "rank_model", "h"),
        estimator=getattr(args, "estimator", "entity_fe"),
        cov_type=getattr(args, "cov_type", "hc0"),
        iia_correlation=getattr(args, "correlation", "pearson"),
    )


def _out(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _drm_data(config, data):
    rankings = rank_panel(efficiency_panel(data, "h", threads=config.threads))
    ident = dynamic.check_identifiability(rankings)
    if not ident.ok:
        labels = rankings.dmu_labels
        raise IdentifiabilityError([labels[i] for i in ident.leaders], [labels[i] for i in ident.rest])
    z, names = select_covariates(data, config.covariates)
    return dynamic.DrmData(rankings, z, names), rankings


def _cmd_describe(args, config):
    data = load_config_panel(config)
    summary, corr = describe(data)
    out = _out(args)
    _write_csv(summary, out / "summary.csv")
    _write_csv(corr.reset_index(), out / "correlation.csv")
    print(summary.to_string(index=False))


def _cmd_dea(args, config):
    data = load_config_panel(config)
    panel = efficiency_panel(data, args.model, threads=config.threads)
    _write_csv(scores_frame({args.model: panel}), _out(args) / f"scores_{args.model}.csv")
    for dmu, period, status in panel.failures:
        print(f"warning: {args.model} failed for {dmu} in {period}: {status}", file=sys.stderr)
    means = np.nanmean(np.where(np.isfinite(panel.scores), panel.scores, np.nan), axis=1)
    for label, m in zip(panel.dmu_labels, means):
        print(f"{label}\t{m:.4f}")


def _cmd_rank(args, config):
    data = load_config_panel(config)
    rankings = rank_panel(efficiency_panel(data, args.model, threads=config.threads))
    _write_csv(rankings_frame(rankings), _out(args) / "rankings.csv")
    print("period\t" + "\t".join(str(l) for l in rankings.dmu_labels))
    for p, row in zip(rankings.periods, rankings.ranks):
        print(f"{p}\t" + "\t".join(str(int(r)) for r in row))


def _print_fit(f):
    print(f.table()[["name", "estimate", "std_error", "p_value"]].to_string(index=False))
    print(f"loglik = {f.loglik:.4f}")


def _cmd_fit(args, config):
    data = load_config_panel(config)
    drm, rankings = _drm_data(config, data)
    f = dynamic.fit(drm)
    out = _out(args)
    _write_csv(drm_frame(f), out / "drm_fit.csv")
    _write_csv(worths_frame(f, rankings.periods), out / "worths.csv")
    _print_fit(f)


def _cmd_bootstrap(args, config):
    data = load_config_panel(config)
    drm, _ = _drm_data(config, data)
    f = dynamic.fit(drm)
    b = dynamic.bootstrap(drm, f, args.replications, config.seed, threads=config.threads)
    _write_csv(drm_frame(f, b), _out(args) / "drm_fit.csv")
    _print_fit(b)
    print(f"failed replicates: {b.n_failed} of {args.replications}")


def _cmd_iia(args, config):
    data = load_config_panel(config)
    rep = iia_experiment(data, args.model, args.correlation, threads=config.threads)
    _write_csv(rep.changes, _out(args) / "iia.csv")
    print(f"unchanged fraction: {rep.unchanged_fraction:.4f}")
    print(f"{rep.correlation_method} correlation: {rep.rank_correlation:.4f}")


def _cmd_report(args, config):
    bundle = run_pipeline(config)
    for name in bundle.files:
        print(bundle.out_dir / name)
    print(bundle.out_dir / "manifest.txt")


COMMANDS = {
    "describe": _cmd_describe,
    "dea": _cmd_dea,
    "rank": _cmd_rank,
    "fit": _cmd_fit,
    "bootstrap": _cmd_bootstrap,
    "iia": _cmd_iia,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "fixture":
            for path in write_synthetic_fixture(args.out_dir, seed=args.seed).values():
                print(path)
            return EXIT_OK
        config = _config(args)
        config.validate()
        if args.command == "bootstrap" and args.replications < 1:
            raise ValidationError("--replications must be a positive integer")
        with warnings.catch_warnings():
            if not args.verbose:
                warnings.simplefilter("ignore")
            COMMANDS[args.command](args, config)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
