"""Command line: ``magfp {verify,decay,enlarge,report}``.

Exit codes: 0 all suites pass, 1 a tolerance check failed, 2 configuration
error or refusal.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import ConfigError, SCHEMA, load_config
from .experiments import GateRefusal, run_decay, run_enlarge, run_report, run_verify
from .io import write_json

RUNNERS = {"verify": run_verify, "decay": run_decay, "enlarge": run_enlarge}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="magfp", description="Magnetized kinetic Fokker-Planck verification lab")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("verify", "algebraic and conservation invariants"),
                        ("decay", "decay to equilibrium with fitted rates"),
                        ("enlarge", "splitting, dissipativity and smoothing checks")):
        p = sub.add_parser(name, help=help_,
                           epilog="Tolerances can be overridden with --tol.NAME=VALUE, any key with --set KEY=VALUE.")
        p.add_argument("--config", required=True, help="experiment configuration file")
        p.add_argument("--out", help="output directory (overrides outputs.dir)")
        p.add_argument("--seed", type=int, help="seed for random initial data (overrides initial.seed)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    p = sub.add_parser("report", help="merge run directories into summary tables")
    p.add_argument("root", help="directory holding run subdirectories")
    p.add_argument("--out", help="where to write the summary (default: root)")
    return parser


def _overrides(args, extra: list) -> dict:
    ov = {}
    items = list(args.set)
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--tol."):
            raise ConfigError(f"unrecognized argument {tok!r}")
        if "=" in tok:
            items.append(tok[2:])
        elif i + 1 < len(extra):
            items.append(f"{tok[2:]}={extra[i + 1]}")
            i += 1
        else:
            raise ConfigError(f"{tok} needs a value")
        i += 1
    for item in items:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must be KEY=VALUE")
        k, v = (s.strip() for s in item.split("=", 1))
        if k not in SCHEMA:
            raise ConfigError(f"unknown key {k!r}")
        ov[k] = v
    if args.seed is not None:
        ov["initial.seed"] = str(args.seed)
    return ov


def main(argv=None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        if args.command == "report":
            if extra:
                raise ConfigError(f"unrecognized arguments: {' '.join(extra)}")
            summary = run_report(args.root, args.out)
            print(f"{len(summary['runs'])} run(s) merged, {len(summary['incomplete'])} incomplete")
            return 0
        cfg = load_config(args.config, _overrides(args, extra))
        out = args.out or cfg.outputs_dir
        if not out:
            raise ConfigError("no output directory: pass --out or set outputs.dir")
        report = RUNNERS[args.command](cfg, out)
    except GateRefusal as exc:
        refusal = {"refused": True, "command": args.command, "violated_gates": exc.gates}
        print(json.dumps(refusal), file=sys.stderr)
        out = getattr(args, "out", None)
        if out:
            from pathlib import Path
            Path(out).mkdir(parents=True, exist_ok=True)
            write_json(refusal, Path(out) / "refusal.json")
        return 2
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    for name, suite in report["suites"].items():
        print(f"{'PASS' if suite['passed'] else 'FAIL'}  {name}")
    return 0 if report["passed"] else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
