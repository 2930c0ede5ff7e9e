"""Command-line interface: ``diagmeta fit | sroc | simulate``.

Exit codes: 0 success, 1 usage or input error, 2 fit failure.
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import load_delirium, read_dataset
from .errors import DiagMetaError
from .inference import FitOptions, confidence_region, fit_model, sroc_curve
from .likelihoods import ModelKind
from .links import Link, link_inverse
from .plotting import SrocLayer, plot_coverage, plot_sroc
from .report import SCHEMA_VERSION, build_report, fit_from_report, load_report, write_report
from .simulate import load_config, paper_grid, run_scenario, summaries_to_csv

log = logging.getLogger("diagmeta")

EXIT_OK, EXIT_USAGE, EXIT_FIT_FAILED = 0, 1, 2
BUNDLED = "@delirium"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _load_data(spec):
    return load_delirium() if spec == BUNDLED else read_dataset(spec)


def cmd_fit(args, argv):
    data = _load_data(args.data)
    fit = fit_model(
        data, args.model, args.link,
        FitOptions(gh_nodes=args.gh_nodes, correction=args.correction, seed=args.seed),
    )
    config = {"data": args.data, "seed": args.seed, "argv": argv}
    write_report(build_report(fit, data, config, level=args.level), args.out)
    if fit.failure is not None:
        print(f"fit failed: {fit.failure.kind.value}: {fit.failure.detail}", file=sys.stderr)
        return EXIT_FIT_FAILED
    return EXIT_OK


def _layer(report, points, level):
    fit = fit_from_report(report)
    grid = np.linspace(0.001, 0.999, points)
    label = f"{fit.model.value} ({fit.link.value})"
    summary = (1.0 - float(link_inverse(fit.link, fit.estimates[1])),
               float(link_inverse(fit.link, fit.estimates[0])))
    return SrocLayer(label, sroc_curve(fit, grid), summary, confidence_region(fit, level, points))


def cmd_sroc(args, argv):
    if len(args.fit) > 2:
        raise UsageError("sroc accepts at most two --fit reports")
    reports = [load_report(p) for p in args.fit]
    for path, rep in zip(args.fit, reports):
        if rep["failure"] is not None:
            print(f"{path}: fit failed ({rep['failure']['kind']}); refusing to plot", file=sys.stderr)
            return EXIT_FIT_FAILED
        if rep["model"] == ModelKind.MTM_FIXED.value:
            raise UsageError(f"{path}: fixed-effects fits have no SROC curve")
    layers = [_layer(rep, args.points, args.level) for rep in reports]
    plot_sroc(layers, args.out, level=args.level,
              description=f"diagmeta {__version__} sroc schema_version {SCHEMA_VERSION}")
    return EXIT_OK


def cmd_simulate(args, argv):
    if args.config is None and args.grid is None:
        raise UsageError("simulate needs --config or --grid paper")
    replicates, seed, methods, scenarios = None, None, ("approx", "mtm"), []
    if args.config is not None:
        cfg = load_config(args.config)
        scenarios.extend(cfg["scenarios"])
        replicates, seed, methods = cfg["replicates"], cfg["seed"], cfg["methods"]
    if args.grid == "paper":
        scenarios.extend(paper_grid())
    if args.link is not None:
        link = Link.parse(args.link)
        if args.config is not None and args.grid is None:
            scenarios = [s.__class__(**{**s.__dict__, "link": link}) for s in scenarios]
        else:
            scenarios = [s for s in scenarios if s.link is link]
    if args.methods:
        methods = tuple(args.methods.split(","))
    replicates = args.replicates or replicates
    seed = args.seed if args.seed is not None else (seed or 0)
    if not replicates:
        raise UsageError("number of replicates not given (--replicates or config)")
    if not scenarios:
        raise UsageError("no scenarios to run")

    summaries = []
    for i, sc in enumerate(scenarios, 1):
        log.info("scenario %d/%d: %s", i, len(scenarios), sc)
        summaries.extend(run_scenario(sc, replicates, methods, seed).values())
    Path(args.out).write_text(summaries_to_csv(summaries), encoding="utf-8")
    if args.plot:
        plot_coverage(summaries, Path(args.out).with_suffix(".svg"),
                      description=f"diagmeta {__version__} coverage schema_version {SCHEMA_VERSION}")
    return EXIT_OK


def build_parser():
    p = _Parser(prog="diagmeta", description="Meta-analysis of diagnostic accuracy studies.")
    p.add_argument("--version", action="version", version=f"diagmeta {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", help="fit a model and write a JSON report")
    f.add_argument("--data", required=True,
                   help=f"CSV with columns study,tp,fp,fn,tn ('{BUNDLED}' for the bundled data)")
    f.add_argument("--model", required=True, choices=[m.value for m in ModelKind])
    f.add_argument("--link", required=True, choices=[k.value for k in Link])
    f.add_argument("--gh-nodes", type=int, default=21)
    f.add_argument("--correction", choices=["half-cell", "none"], default="half-cell")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--level", type=float, default=0.95)
    f.add_argument("--out", required=True)
    f.set_defaults(handler=cmd_fit)

    s = sub.add_parser("sroc", help="draw SROC curves from one or two fit reports")
    s.add_argument("--fit", action="append", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--level", type=float, default=0.95)
    s.add_argument("--points", type=int, default=200)
    s.set_defaults(handler=cmd_sroc)

    m = sub.add_parser("simulate", help="run Monte-Carlo scenarios and write a CSV summary")
    m.add_argument("--config")
    m.add_argument("--grid", choices=["paper"])
    m.add_argument("--replicates", type=int)
    m.add_argument("--seed", type=int)
    m.add_argument("--link", choices=[k.value for k in Link])
    m.add_argument("--methods", help="comma-separated subset of approx,mtm")
    m.add_argument("--out", required=True)
    m.add_argument("--plot", action="store_true", help="also write a coverage SVG next to the CSV")
    m.set_defaults(handler=cmd_simulate)
    return p


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.handler(args, argv)
    except UsageError as exc:
        print(f"diagmeta: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DiagMetaError, OSError, ValueError) as exc:
        print(f"diagmeta: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
