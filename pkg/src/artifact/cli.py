"""Command line entry point: ``artifact {gen,run,conditions,variance}``."""

import argparse
import json
import sys

from . import harness
from .errors import ArtifactError, ValidationError

COMMANDS = {
    "gen": harness.cmd_gen,
    "run": harness.cmd_run,
    "conditions": harness.cmd_conditions,
    "variance": harness.cmd_variance,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="artifact", description="Off-policy TD/TDC policy-evaluation laboratory.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "gen": "write the configured instance to OUT/instance.json",
        "run": "run the algorithm grid and write traces, envelopes and a manifest",
        "conditions": "evaluate bound constants and step-size conditions",
        "variance": "Monte-Carlo variance of TDC and VRTDC updates",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="TOML experiment config")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--threads", type=int, help="worker processes for repetitions")
        p.add_argument("--seed", type=int, help="base seed (overrides the config)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = harness.parse_config(args.config)
        if args.threads is not None and args.threads < 1:
            raise ValidationError(["--threads must be at least 1"])
        result = COMMANDS[args.command](cfg, out=args.out, threads=args.threads, seed=args.seed)
    except ValidationError as exc:
        print("invalid configuration:", file=sys.stderr)
        for v in exc.violations:
            print(f"  - {v}", file=sys.stderr)
        return 2
    except ArtifactError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if args.command == "conditions":
        for name, sec in result["settings"].items():
            rep = sec["report"]
            print(f"{name}: passed={rep['passed']} max(D,E,F)={sec['max_DEF']:.6g}"
                  + (f" epsilon={sec['epsilon']}" if "epsilon" in sec else ""))
            for c in rep["conditions"]:
                if not c["passed"]:
                    print(f"  FAIL {c['id']}: {c['lhs']:.6g} {c['relation']} {c['rhs']:.6g}")
    elif args.command == "gen":
        print(result)
    else:
        print(json.dumps({k: v for k, v in result.items() if k != "instance"}, indent=1, default=str)[:2000])
    return 0


if __name__ == "__main__":
    sys.exit(main())
