"""Command-line entry point: ``bsdelab <command> --config FILE [--out-dir DIR] [--seed-override S] [--quiet]``.

Exit status: 0 on success, 1 when a verification check or solver stage
failed (details in ``report.txt``), 2 on configuration or input errors.
"""

import argparse
import sys

from .errors import BSDELabError
from .report import COMMANDS, USAGE_ERRORS, run_config

HELP = {
    "solve": "solve the configured BSDE and export the solution",
    "verify": "solve, then run the duality and orthogonality checks",
    "compare": "solve two problems on one ensemble and check the comparison theorem",
    "consistency": "compare a full solve with a direct solve on [t_j1, T]",
    "sweep": "refinement study over J, N and basis degree",
    "cache": "simulate the configured ensemble and write the binary cache",
}


def build_parser():
    parser = argparse.ArgumentParser(prog="bsdelab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", required=True, help="run configuration (flat TOML, dotted keys)")
        p.add_argument("--out-dir", default=".", help="directory for report.txt and CSV files")
        p.add_argument("--seed-override", type=int, default=None, help="replace ensemble.seed")
        p.add_argument("--quiet", action="store_true", help="print nothing on success")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        report = run_config(args.config, args.command, args.out_dir, args.seed_override)
    except USAGE_ERRORS as exc:
        print(f"bsdelab: error: {exc}", file=sys.stderr)
        return 2
    except (BSDELabError, OSError) as exc:
        print(f"bsdelab: error: {exc}", file=sys.stderr)
        return 2
    if not args.quiet or not report.ok:
        status = "ok" if report.ok else "FAILED: " + ", ".join(report.failures)
        print(f"bsdelab {args.command}: {status} (report in {args.out_dir}/report.txt)")
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
