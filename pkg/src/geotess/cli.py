"""Command-line front end.

Exit codes: 0 when every check passes, 2 when an experiment ran but a
threshold was breached, 1 for usage, configuration or data errors.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .experiments import (CONFIG_KEYS, ConfigError, MissingDataError, default_config, emit_plots,
                          load_config, parse_decimal, parse_int, replicate_rng, run_experiment,
                          save_report, surface, trace_stream, _arcs, _list, _point)
from .plp import ArcPair, beta_crofton, beta_integral

EXIT_OK, EXIT_ERROR, EXIT_FAILED = 0, 1, 2

log = logging.getLogger("geotess")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _arg(parse):
    def f(text: str):
        try:
            return parse(text)
        except ConfigError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc
    f.__name__ = getattr(parse, "__name__", "value")
    return f


def _arc(text: str) -> tuple[float, float]:
    parts = text.split(":")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected lo:hi, got {text!r}")
    return parse_decimal(parts[0]), parse_decimal(parts[1])


def _experiment_flags(p: argparse.ArgumentParser, extra: Sequence[str] = ()) -> None:
    p.add_argument("--config", type=Path, help="key = value config file")
    p.add_argument("--seed", type=_arg(parse_int), help="master seed")
    p.add_argument("--replicates", type=str, help="replicate count, or a comma list (one per T)")
    p.add_argument("--T", dest="T", type=str, help="comma-separated geodesic lengths")
    p.add_argument("--alpha", type=str, help="disk radius in rescaled units")
    p.add_argument("--lam", type=str, help="line-process intensity")
    p.add_argument("--output", type=str, help="output root (default $GEOTESS_OUTPUT or ./results)")
    p.add_argument("--label", type=str, help="run label used as the output subdirectory")
    p.add_argument("--workers", type=str, help="worker processes")
    if "half-width" in extra:
        p.add_argument("--half-width", dest="half_width", type=str, help="half width n of the window [-n, n]^2")
    if "arcs" in extra:
        p.add_argument("--arcs", type=str, help="arc pairs a0:a1:b0:b1 separated by ';'")
    if "center2" in extra:
        p.add_argument("--center2", type=str, help="second disk center 'x, y' (Poincare disk)")
    p.add_argument("--no-save", action="store_true", help="do not write output files")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="geotess", description="Random geodesic tessellations and Poisson line processes.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("plp-sanity", help="Poisson line process battery")
    _experiment_flags(p, ("half-width",))
    p = sub.add_parser("local", help="local Poisson limit of disk crossings")
    _experiment_flags(p, ("arcs",))
    p = sub.add_parser("two-point", help="independence of crossings at two disks")
    _experiment_flags(p, ("center2",))
    p = sub.add_parser("global", help="tessellation statistics of long geodesics")
    _experiment_flags(p)
    p = sub.add_parser("selfint", help="self-intersection density sweep")
    _experiment_flags(p)

    p = sub.add_parser("beta", help="mean number of lines crossing two arcs")
    p.add_argument("--alpha", type=_arg(parse_decimal), default=1.0, help="circle radius")
    p.add_argument("--arc-a", type=_arc, required=True, help="first arc lo:hi (radians)")
    p.add_argument("--arc-b", type=_arc, required=True, help="second arc lo:hi (radians)")
    p.add_argument("--method", choices=("closed-form", "quadrature"), default="closed-form",
                   help="evaluation method")

    p = sub.add_parser("trace", help="dump a random geodesic trace as JSON")
    p.add_argument("--T", dest="T", type=_arg(parse_decimal), default=10.0, help="geodesic length")
    p.add_argument("--seed", type=_arg(parse_int), default=12345, help="master seed")
    p.add_argument("--intersections", action="store_true", help="include self-intersections")
    p.add_argument("--out", type=Path, help="write to this file instead of stdout")

    p = sub.add_parser("plot", help="render SVG figures for a saved run")
    p.add_argument("result_dir", type=Path, help="directory holding report.json and raw.csv")

    sub.add_parser("surface-info", help="print the genus-2 surface constants")
    return parser


def _config_from_args(args) -> object:
    base = load_config(args.config) if args.config else default_config(args.command)
    if base.experiment != args.command:
        raise ConfigError(f"config is for {base.experiment!r}, not {args.command!r}")
    overrides = {}
    for key in CONFIG_KEYS:
        v = getattr(args, key, None)
        if v is not None and key != "experiment":
            overrides[key] = v if isinstance(v, str) else v
    return base.with_overrides(**overrides)


def _run_experiment(args) -> int:
    config = _config_from_args(args)
    report = run_experiment(config)
    for m in report.metrics:
        flag = "ok" if m.passed else ("FAIL" if m.gating else "note")
        ref = "" if m.reference is None else f" (reference {m.reference:.6g})"
        est = "nan" if m.estimate is None else f"{m.estimate:.6g}"
        print(f"{flag:4s} {m.name}: {est}{ref}  [{m.rule}]")
    if not args.no_save:
        d = save_report(report, config)
        print(f"results written to {d}")
    print("PASS" if report.passed else "FAIL")
    return EXIT_OK if report.passed else EXIT_FAILED


def _beta(args) -> int:
    (a0, a1), (b0, b1) = args.arc_a, args.arc_b
    pair = ArcPair(a0, a1, b0, b1, args.alpha)
    val = beta_crofton(pair) if args.method == "closed-form" else beta_integral(pair)
    print(f"{val:.10f}")
    return EXIT_OK


def _trace(args) -> int:
    from .tracer import random_trace, self_intersections
    S = surface()
    tr = random_trace(S, args.T, replicate_rng(args.seed, trace_stream(args.T), 0), seed=args.seed)
    text = tr.to_json(self_intersections(tr) if args.intersections else None)
    if args.out:
        args.out.write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


def _plot(args) -> int:
    for p in emit_plots(args.result_dir):
        print(p)
    return EXIT_OK


def _surface_info(args) -> int:
    S = surface()
    o = S.octagon
    print(f"genus                {S.genus}")
    print(f"area                 {S.area:.5f}")
    print(f"kappa_g              {S.kappa:.7f}")
    print(f"circumradius         {o.circumradius:.10f}")
    print(f"inradius             {o.inradius:.10f}")
    print(f"injectivity radius   {S.injectivity_radius:.10f}")
    print(f"vertex-cycle angle   {2 * math.pi:.10f}")
    return EXIT_OK


COMMANDS = {
    "plp-sanity": _run_experiment,
    "local": _run_experiment,
    "two-point": _run_experiment,
    "global": _run_experiment,
    "selfint": _run_experiment,
    "beta": _beta,
    "trace": _trace,
    "plot": _plot,
    "surface-info": _surface_info,
}


_VALUE_FLAGS = ("--arc-a", "--arc-b", "--center2", "--arcs")


def _glue_values(argv: Sequence[str]) -> list[str]:
    """Attach values that start with '-' (negative angles) to their flag."""
    out, i = [], 0
    while i < len(argv):
        a = argv[i]
        if a in _VALUE_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{a}={argv[i + 1]}")
            i += 2
        else:
            out.append(a)
            i += 1
    return out


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    argv = _glue_values(list(sys.argv[1:] if argv is None else argv))
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error[usage]: {exc}", file=sys.stderr)
        return EXIT_ERROR
    level = logging.WARNING - 10 * getattr(args, "verbose", 0)
    logging.basicConfig(level=max(level, logging.DEBUG), format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error[config]: {exc}", file=sys.stderr)
    except MissingDataError as exc:
        print(f"error[missing-data]: {exc}", file=sys.stderr)
    except ValueError as exc:
        print(f"error[value]: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
