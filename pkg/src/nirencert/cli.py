"""Command-line entry point.

Exit codes: 0 solution certified (or flow completed), 10 inconclusive
(S = 1), 20 criterion not applicable or blocking caveats or a numerical
failure, 64 usage / input error, 74 I/O error.
"""
import argparse
import json
import logging
import sys

from . import __version__
from . import driver
from .constants import C1TildeMode
from .errors import CertError
from .problem import load_initial, load_problem

EXIT_OK = 0
EXIT_INCONCLUSIVE = 10
EXIT_NOT_CERTIFIED = 20
EXIT_USAGE = 64
EXIT_IO = 74

USAGE_CODES = {
    "bad-problem", "bad-initial", "bad-json", "missing-file", "syntax-error", "unknown-variable",
    "unknown-function", "bad-config", "census-too-large", "bad-max-p", "dimension-mismatch",
    "bad-c0", "bad-sigma", "bad-dimension", "bad-option", "bad-point", "bad-frame",
}


def exit_code_for(err):
    if err.code == "io-error":
        return EXIT_IO
    return EXIT_USAGE if err.code in USAGE_CODES else EXIT_NOT_CERTIFIED


def _parser():
    p = argparse.ArgumentParser(prog="nirencert", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"nirencert {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("certify", help="run the existence certificate on a problem file")
    c.add_argument("--problem", required=True)
    c.add_argument("--out", help="write the JSON report here")
    c.add_argument("--seed", type=int, help="multistart seed (overrides the problem file)")
    c.add_argument("--max-p", type=int)
    c.add_argument("--force", action="store_true", help="allow censuses above 2^20 subsets")
    c.add_argument("--ordered-tuples", action="store_true")
    c.add_argument("--c1tilde-mode", choices=[m.value for m in C1TildeMode])
    c.add_argument("--k-expr", help="curvature expression (replaces K in the problem file)")
    c.add_argument("--json", action="store_true", help="print the JSON report to stdout")

    f = sub.add_parser("flow", help="run the reduced bubble flow")
    f.add_argument("--problem", required=True)
    f.add_argument("--initial", required=True)
    f.add_argument("--t-max", type=float)
    f.add_argument("--lambda-cap", type=float)
    f.add_argument("--epsilon", type=float)
    f.add_argument("--seed", type=int)
    f.add_argument("--log", help="CSV trajectory output")
    f.add_argument("--out", help="write the JSON report here")
    f.add_argument("--json", action="store_true")
    return p


def _apply_overrides(spec, args):
    if args.seed is not None:
        spec.seed = args.seed
    if getattr(args, "k_expr", None) is not None:
        spec.k_expr = args.k_expr
        spec.critical_points = None
    if getattr(args, "max_p", None) is not None:
        spec.max_p = args.max_p
    if getattr(args, "force", False):
        spec.force = True
    if getattr(args, "ordered_tuples", False):
        spec.ordered_tuples = True
    if getattr(args, "c1tilde_mode", None):
        spec.c1tilde_mode = C1TildeMode.parse(args.c1tilde_mode)
    return spec.validate()


def _emit(report, args):
    if args.out:
        try:
            with open(args.out, "w") as fh:
                fh.write(json.dumps(report, sort_keys=True, indent=2) + "\n")
        except OSError as exc:
            raise CertError("io-error", f"cannot write report: {exc}") from None
    if args.json:
        print(json.dumps(report, sort_keys=True, indent=2))
    else:
        print(driver.summary(report))


def run(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "certify":
        spec = _apply_overrides(load_problem(args.problem), args)
        report, cert = driver.certify(spec)
        _emit(report, args)
        return cert.exit_code
    spec = _apply_overrides(load_problem(args.problem), args)
    points, lambdas, cfg = load_initial(args.initial)
    for name in ("t_max", "lambda_cap", "epsilon"):
        if getattr(args, name) is not None:
            cfg[name] = getattr(args, name)
    report, _ = driver.flow_cmd(spec, points, lambdas, cfg, log_path=args.log)
    _emit(report, args)
    return EXIT_OK


def main(argv=None):
    try:
        return run(argv)
    except SystemExit as exc:
        # argparse reports usage errors with status 2
        return EXIT_USAGE if exc.code == 2 else (exc.code or 0)
    except CertError as err:
        print(f"error: {err}", file=sys.stderr)
        return exit_code_for(err)


if __name__ == "__main__":
    sys.exit(main())
