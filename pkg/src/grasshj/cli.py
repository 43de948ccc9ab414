"""Command-line entry point: ``grasshj run|sweep|verify``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import scenario
from .errors import ConfigError, GrassHJError


def _parser():
    p = argparse.ArgumentParser(
        prog="grasshj",
        description="Hamilton-Jacobi trajectories of Grassmann-valued mechanics "
                    "checked against the Lagrangian ODE oracle.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="scenario JSON file")
        sp.add_argument("--output-dir", help="override the config 'outputs' directory")
        sp.add_argument("--quiet", action="store_true", help="print nothing on success")

    common(sub.add_parser("run", help="run HJ and oracle pipelines and compare them"))
    sp = sub.add_parser("sweep", help="rerun a scenario over values of one parameter")
    common(sp)
    sp.add_argument("--param", required=True,
                    help="constant name, dotted field (ics.v0, window.t_max) or E")
    sp.add_argument("--values", required=True, help="comma-separated numbers")
    sp.add_argument("--jobs", type=int, default=1, help="worker processes")
    common(sub.add_parser("verify", help="constraint-algebra checks only"))
    return p


def _values(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse values {text!r}", "--values") from None


def _say(args, text):
    if not args.quiet:
        print(text)


def _run(args):
    cfg = scenario.load_config(args.config)
    report = scenario.run_scenario(cfg, output_dir=args.output_dir)
    if not args.quiet or not report.passed:
        sys.stdout.write(report.to_text())
    return report.exit_code


def _sweep(args):
    path = Path(args.config)
    cfg = scenario.load_config(path)  # validates the template
    data = json.loads(path.read_text())
    out = args.output_dir or cfg.outputs
    reports = scenario.sweep(data, args.param, _values(args.values), out, jobs=args.jobs)
    for rep in reports:
        _say(args, f"{rep['name']}: {rep['status']}")
    _say(args, f"summary: {Path(out) / 'summary.csv'}")
    return max((r["exit_code"] for r in reports), default=0)


def _verify(args):
    cfg = scenario.load_config(args.config)
    report, flags = scenario.constraint_flags(cfg)
    for key, value in flags.items():
        _say(args, f"{key}: {value}")
    return scenario.EXIT_PASS if report.passed else scenario.EXIT_COMPARE


def main(argv=None):
    args = _parser().parse_args(argv)
    handler = {"run": _run, "sweep": _sweep, "verify": _verify}[args.command]
    try:
        return handler(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return scenario.EXIT_CONFIG
    except GrassHJError as err:
        print(f"{type(err).__name__}: {err}", file=sys.stderr)
        return scenario.EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
