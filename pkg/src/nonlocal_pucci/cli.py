"""Command-line entry point: ``nonlocal-harness <command> [options]``.

Exit codes: 0 when every check passes, 2 when a property check fails,
1 on configuration or runtime errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import NonlocalError
from .harness import SCHEMAS, ConfigError, build_report, rerun_report, resolve_config, run_experiment, write_report
from .kernels import load_toml

__all__ = ["build_parser", "main"]

EXIT_PASS, EXIT_ERROR, EXIT_PROPERTY = 0, 1, 2

# flag name -> (config key, type, help)
_FLAGS = {
    "classify-kernel": [("R", float, "radius for the drift"), ("seed", int, "sampling seed"),
                        ("samples", int, "class-verification samples")],
    "eval-operator": [("operator", str, "operator kind"), ("sigma", float, "order"), ("lambda", float, "lower bound"),
                      ("Lambda", float, "upper bound"), ("R", float, "truncation radius"), ("n", int, "dimension"),
                      ("function", str, "bump, gaussian or getoor"), ("points", str, "comma-separated coordinates")],
    "verify-barrier": [("kind", str, "power, exponential or psi"), ("sigma", float, "order"), ("n", int, "dimension"),
                       ("lambda", float, "lower bound"), ("Lambda", float, "upper bound"), ("R", float, "radius"),
                       ("samples", int, "radii per certificate")],
    "abp-report": [("n", int, "dimension"), ("R", float, "radius"), ("M0", float, "spike height"),
                   ("sigma", float, "order"), ("resolutions", str, "comma-separated odd node counts"),
                   ("C", float, "constant C"), ("xi0", float, "measure fraction"), ("max_depth", int, "depth cap")],
    "solve": [("operator", str, "operator kind"), ("sigma", float, "order"), ("lambda", float, "lower bound"),
              ("Lambda", float, "upper bound"), ("n", int, "dimension"), ("N", int, "nodes per axis"),
              ("forcing", float, "constant forcing"), ("tol", float, "residual target"),
              ("max_iters", int, "iteration cap")],
    "level-decay": [("profile", str, "power or solve"), ("p", float, "profile exponent"), ("n", int, "dimension"),
                    ("resolutions", str, "comma-separated node counts"), ("tolerance", float, "relative tolerance")],
    "harnack": [("sigma", float, "order"), ("sigmas", str, "comma-separated sweep"),
                ("resolutions", str, "comma-separated node counts"), ("problems", int, "family size"),
                ("seed", int, "family seed"), ("C0", float, "additive constant")],
    "holder": [("profile", str, "power or solve"), ("exponent", float, "profile exponent"),
               ("alpha", float, "Holder exponent"), ("resolutions", str, "comma-separated node counts"),
               ("radius", float, "ball radius")],
    "c1alpha": [("profile", str, "power or quadratic"), ("exponent", float, "profile exponent"),
                ("alpha", float, "Holder exponent"), ("N", int, "nodes per axis"), ("radius", float, "ball radius"),
                ("compare_families", str, "also compare a smooth and a split kernel")],
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nonlocal-harness",
                                description="Numerical experiments for nonlocal extremal operators.")
    sub = p.add_subparsers(dest="command", metavar="command")
    for name in SCHEMAS:
        sp = sub.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("--config", type=Path, help="TOML config file")
        sp.add_argument("--out", type=Path, help="output directory (default out/<command>)")
        for key, typ, hlp in _FLAGS[name]:
            sp.add_argument(f"--{key.replace('_', '-')}", dest=key, type=typ, default=None, help=hlp)
    rp = sub.add_parser("rerun", help="re-run a report's embedded config and compare")
    rp.add_argument("report", type=Path)
    rp.add_argument("--out", type=Path, help="where to write the fresh report")
    return p


def _print(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = int(exc.code or 0)
        return EXIT_PASS if code == 0 else EXIT_ERROR
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_ERROR
    try:
        if args.command == "rerun":
            cmp = rerun_report(args.report)
            if args.out is not None:
                args.out.mkdir(parents=True, exist_ok=True)
                (args.out / "report.json").write_text(json.dumps(cmp["report"], indent=2, sort_keys=True))
            _print({"identical": cmp["identical"], "differing_sections": cmp["differing_sections"]})
            return EXIT_PASS if cmp["identical"] else EXIT_PROPERTY
        file_cfg = {}
        if args.config is not None:
            try:
                file_cfg = load_toml(args.config)
            except OSError as exc:
                raise ConfigError(f"field 'config': cannot read {args.config}: {exc.strerror}") from None
            except ValueError as exc:
                raise ConfigError(f"field 'config': {exc}") from None
        overrides = {k: getattr(args, k) for k, _, _ in _FLAGS[args.command]}
        cfg = resolve_config(args.command, file_cfg, overrides)
        res, elapsed = run_experiment(args.command, cfg)
        report = build_report(args.command, cfg, res, elapsed)
        out = args.out if args.out is not None else Path("out") / args.command
        path = write_report(report, res, out)
        _print({"command": args.command, "passed": report["passed"], "report": str(path),
                "checks": report["checks"]})
        return EXIT_PASS if report["passed"] else EXIT_PROPERTY
    except (NonlocalError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
