"""``rmt`` command line: run, sweep and report."""

import argparse
import sys

from . import __version__, harness
from .errors import ConfigError


def _values(text: str) -> list:
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            out.append(int(tok))
        except ValueError:
            out.append(float(tok))
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rmt", description="Random matrix experiments.")
    p.add_argument("--version", action="version", version=f"rmt {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment config (YAML or JSON)")
    r.add_argument("config")
    r.add_argument("-o", "--output", help="output directory (overrides the config)")
    s = sub.add_parser("sweep", help="run a config once per value of a numeric field")
    s.add_argument("config")
    s.add_argument("--axis", required=True, help="field name: N, eps, or params.<key>")
    s.add_argument("--values", required=True, help="comma-separated values, e.g. 500,1000,2000")
    s.add_argument("-o", "--output")
    rep = sub.add_parser("report", help="summarise a run manifest and verify file hashes")
    rep.add_argument("manifest")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            man = harness.run(args.config, args.output)
            print(harness.report(man.output))
            return man.exit_code
        if args.command == "sweep":
            mans = harness.sweep(args.config, args.axis, _values(args.values), args.output)
            for m in mans:
                print(f"{m.output}: status={m.status} passed={m.passed}")
            return max(m.exit_code for m in mans)
        print(harness.report(args.manifest))
        return harness.EXIT_PASS
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for path, msg in exc.field_errors:
            print(f"  {path}: {msg}", file=sys.stderr)
        return harness.EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return harness.EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
