"""Command-line interface: ``raschmix {fit,select,simulate,dif,report}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
The seed is taken from ``--seed``, else ``$RASCHMIX_SEED``, else drawn at
random; it is always printed so a run can be repeated exactly.
"""

import argparse
import json
import logging
import os
import secrets
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    DataError,
    ResponseMatrix,
    VERBAL_AGGRESSION_ITEMS,
    dichotomize,
    filter_extremes,
    load_verbal_aggression,
    read_csv,
)
from .dif import andersen_lr_test, detect_dif_mixture
from .mixture import SCORE_CANDIDATES, FitError, MixtureSpec, em_fit, select_k, select_score_model
from .report import format_selection, read_study_csv, render_svg, selection_csv
from .sim import run_study

log = logging.getLogger("raschmix")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
SEED_ENV = "RASCHMIX_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_grid(text: str):
    """``"0:3:1"`` (start:stop:step, inclusive) or ``"0,1,2"``."""
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
                raise ValueError
            start, stop, step = parts
            n = int(np.floor((stop - start) / step + 1e-9)) + 1
            return [round(start + i * step, 10) for i in range(n)]
        vals = [float(p) for p in text.split(",") if p.strip()]
        if not vals:
            raise ValueError
        return vals
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid grid {text!r}; use start:stop:step or a comma list") from None


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def resolve_seed(seed):
    if seed is not None:
        return seed
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"${SEED_ENV} is not an integer: {env!r}") from None
    return secrets.randbits(32)


def _data_args(p):
    p.add_argument("--data", help="response CSV (default: bundled verbal aggression data)")
    p.add_argument("--items", help="comma-separated item columns (default: all non-id columns)")
    p.add_argument("--no-dichotomize", action="store_true", help="input is already binary")
    p.add_argument("--dichotomize-threshold", type=int, choices=(1, 2), default=1,
                   help="responses >= this value count as 1 (default 1: 0 -> 0, {1,2} -> 1)")
    p.add_argument("--keep-extremes", action="store_true",
                   help="keep persons with score 0 or m (score model then covers 0..m)")


def _fit_args(p):
    p.add_argument("--score", choices=("mean-variance", "saturated"), default="mean-variance")
    p.add_argument("--restricted", action=argparse.BooleanOptionalAction, default=True,
                   help="share the score distribution across classes (default)")
    p.add_argument("--starts", type=_positive_int, default=5)
    p.add_argument("--em-tol", type=float, default=1e-8)
    p.add_argument("--max-em-iter", type=_positive_int, default=500)
    p.add_argument("--seed", type=int)


def build_parser():
    parser = _Parser(prog="raschmix", description="Rasch mixture models for DIF detection.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit one Rasch mixture")
    _data_args(p)
    _fit_args(p)
    p.add_argument("--k", type=_positive_int, default=1)
    p.add_argument("--posterior", action="store_true", help="include class posteriors in the JSON")
    p.add_argument("--out", help="JSON output path (default: stdout)")

    p = sub.add_parser("select", help="choose K or the score model by BIC")
    _data_args(p)
    _fit_args(p)
    p.add_argument("--kmin", type=_positive_int, default=1)
    p.add_argument("--kmax", type=_positive_int, default=4)
    p.add_argument("--score-candidates", choices=("all",),
                   help="compare the four score models at fixed --k instead of selecting K")
    p.add_argument("--k", type=_positive_int, help="number of classes for --score-candidates")
    p.add_argument("--csv", help="write the table as CSV")
    p.add_argument("--json", help="write the full selection as JSON")

    p = sub.add_parser("simulate", help="Monte-Carlo DIF detection study")
    p.add_argument("--scenario", required=True,
                   help="scenario number(s) 1-5, comma-separated")
    p.add_argument("--theta", type=parse_grid, default=[1.0], help="impact grid (default 1)")
    p.add_argument("--delta", type=parse_grid, default=[0.0, 1.0, 2.0, 3.0], help="DIF grid (default 0:3:1)")
    p.add_argument("--n", type=_positive_int, default=500)
    p.add_argument("--m", type=int, default=20)
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--kmax", type=_positive_int, default=3)
    p.add_argument("--split-dif", action="store_true", help="apply -delta/2, +delta/2 instead of +delta")
    p.add_argument("--jobs", type=_positive_int, default=1)
    _fit_args(p)
    p.set_defaults(starts=2, em_tol=1e-6)
    p.add_argument("--out", help="CSV output path (default: stdout)")
    p.add_argument("--json", help="also write the result as JSON")
    p.add_argument("--svg", help="also write a rate-vs-parameter chart")

    p = sub.add_parser("dif", help="DIF detection by mixture or LR test")
    _data_args(p)
    _fit_args(p)
    p.add_argument("--method", choices=("mixture", "lr"), default="mixture")
    p.add_argument("--kmax", type=_positive_int, default=3)
    p.add_argument("--group", help="grouping column for --method lr")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--json", help="write the report as JSON (default: stdout after the summary)")

    p = sub.add_parser("report", help="re-render a study CSV as SVG")
    p.add_argument("--csv", required=True)
    p.add_argument("--svg", required=True)
    p.add_argument("--x", choices=("delta", "theta"))
    return parser


def load_data(args, exclude=()):
    """Read, dichotomize and filter according to the data flags.

    Returns ``(data, filter_report_or_None, extra_columns)``; the extra
    (non-item) columns are filtered alongside the responses.
    """
    if args.data is None:
        raw, ids = load_verbal_aggression()
        names, extra = list(VERBAL_AGGRESSION_ITEMS), {}
    else:
        items = args.items.split(",") if args.items else None
        raw, names, ids, extra = read_csv(args.data, items, exclude)
    if args.no_dichotomize:
        data = ResponseMatrix(raw, tuple(names), ids)
    else:
        data = dichotomize(raw, names, ids, threshold=args.dichotomize_threshold)
    report = None
    if not args.keep_extremes:
        keep = (data.scores > 0) & (data.scores < data.m)
        data, report = filter_extremes(data)
        extra = {c: v[keep] for c, v in extra.items()}
    return data, report, extra


def _spec(args, k=1):
    return MixtureSpec(
        K=k, score_kind=args.score, restricted=args.restricted, n_starts=args.starts,
        max_em_iter=args.max_em_iter, em_tol=args.em_tol, seed=args.seed,
        include_extremes=getattr(args, "keep_extremes", False),
    )


def _write(path, text):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        try:
            Path(path).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise DataError(f"cannot write {path}: {exc.strerror or exc}") from None


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _filter_dict(report):
    if report is None:
        return None
    return {
        "n_input": report.n_input,
        "n_removed_zero": report.n_removed_zero,
        "n_removed_perfect": report.n_removed_perfect,
        "n_effective": report.n_effective,
    }


def cmd_fit(args):
    data, report, _ = load_data(args)
    fit = em_fit(data, _spec(args, args.k))
    doc = fit.to_dict(include_posterior=args.posterior)
    doc["filter"] = _filter_dict(report)
    doc["item_names"] = list(data.item_names)
    doc["warning"] = None if fit.converged else "EM did not converge"
    _write(args.out, _dump(doc))
    print(
        f"seed {args.seed}: {fit.spec.label} K={fit.K} logL={fit.loglik:.1f} df={fit.df} "
        f"BIC={fit.bic:.1f} n={fit.n_effective}" + ("" if fit.converged else " [not converged]"),
        file=sys.stderr if args.out is None else sys.stdout,
    )
    return EXIT_OK


def cmd_select(args):
    data, report, _ = load_data(args)
    if args.score_candidates:
        if args.k is None:
            raise UsageError("--score-candidates needs --k")
        sel = select_score_model(data, args.k, _spec(args), SCORE_CANDIDATES)
    else:
        if args.kmin > args.kmax:
            raise UsageError(f"--kmin ({args.kmin}) exceeds --kmax ({args.kmax})")
        sel = select_k(data, range(args.kmin, args.kmax + 1), _spec(args))
    doc = sel.to_dict()
    doc["filter"] = _filter_dict(report)
    doc["seed"] = args.seed
    print(f"seed {args.seed}, n = {data.n}")
    print(format_selection(doc))
    if args.csv:
        _write(args.csv, selection_csv(doc))
    if args.json:
        _write(args.json, _dump(doc))
    return EXIT_OK


def cmd_simulate(args):
    if args.reps < 1:
        raise UsageError("--reps must be >= 1")
    try:
        scenarios = [int(s) for s in args.scenario.split(",")]
    except ValueError:
        raise UsageError(f"invalid --scenario {args.scenario!r}") from None
    if any(s not in (1, 2, 3, 4, 5) for s in scenarios):
        raise UsageError("scenarios must be in 1..5")
    if any(v < 0 for v in args.theta + args.delta):
        raise UsageError("grids must be non-negative")
    if args.m < 2:
        raise UsageError("--m must be >= 2")
    spec = _spec(args)
    try:
        result = run_study(
            scenarios, args.theta, args.delta, args.reps, spec, range(1, args.kmax + 1),
            seed=args.seed, n=args.n, m=args.m, n_jobs=args.jobs, split_dif=args.split_dif,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    text = result.to_csv()
    _write(args.out, text)
    if args.json:
        _write(args.json, result.to_json() + "\n")
    if args.svg:
        _write(args.svg, render_svg(read_study_csv(text)))
    print(f"seed {args.seed}: {len(result.cells)} cells x {args.reps} replications", file=sys.stderr)
    return EXIT_OK


def cmd_dif(args):
    exclude = (args.group,) if args.group else ()
    data, report, extra = load_data(args, exclude)
    if args.method == "lr":
        if not args.group:
            raise UsageError("--method lr needs --group")
        if args.group not in extra:
            raise UsageError(f"group column {args.group!r} not found")
        groups = extra[args.group]
        if not 0 < args.alpha < 1:
            raise UsageError("--alpha must lie strictly between 0 and 1")
        if len(set(groups.tolist())) < 2:
            raise UsageError(f"group column {args.group!r} has fewer than two groups")
        rep = andersen_lr_test(data, groups, alpha=args.alpha)
    else:
        if args.kmax < 2:
            raise UsageError("--kmax must be >= 2 for mixture DIF detection")
        rep = detect_dif_mixture(data, _spec(args), args.kmax)
    doc = rep.to_dict()
    doc["filter"] = _filter_dict(report)
    doc["seed"] = args.seed
    print(f"seed {args.seed}, n = {data.n}")
    print(rep.summary())
    if args.json:
        _write(args.json, _dump(doc))
    else:
        sys.stdout.write(_dump(doc))
    return EXIT_OK


def cmd_report(args):
    try:
        text = Path(args.csv).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {args.csv}: {exc.strerror or exc}") from None
    _write(args.svg, render_svg(read_study_csv(text), x=args.x))
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "select": cmd_select, "simulate": cmd_simulate, "dif": cmd_dif, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # --help/--version exit 0, usage errors exit EXIT_USAGE
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        if hasattr(args, "seed"):
            args.seed = resolve_seed(args.seed)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"raschmix {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FitError) as exc:
        print(f"raschmix {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"raschmix {args.command}: internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
