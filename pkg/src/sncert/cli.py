"""Command line: ``sncert <stage> --samples S --block B --out DIR``.

Exit status 0 means pass or certificate, 1 rejection or failed check, 2 an
error (bad configuration, missing artifact, malformed input).
"""
from __future__ import annotations

import argparse
import sys

from .errors import SNCertError
from .pipeline import SUBCOMMANDS, PipelineConfig, run

HELP = {
    "ingest": "certify the boundary sign assumptions of the samples",
    "block": "classify boundary faces and split the block",
    "index": "Conley indices of the block and its two halves",
    "certify": "homological saddle-node certificate or rejection",
    "synthesize": "build the deformation to the canonical model",
    "verify": "check the two-equilibria, fold and empty regimes",
    "graphic": "export the Cerf graphic tables and drawing",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sncert", description="Saddle-node certification from sampled vector fields.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--samples", help="sample file (dim=<n> lipschitz=<L> header)")
        p.add_argument("--block", help="block description file")
        p.add_argument("--out", default="sncert-out", help="artifact directory")
        p.add_argument("--lambda0", type=float, default=0.5, help="fold parameter of the canonical model")
        p.add_argument("--tol", type=float, default=1e-3, help="accepted error of the located fold parameter")
        p.add_argument("--seed", type=int, default=0, help="seed for probe-orbit placement")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        cfg = PipelineConfig(
            samples=args.samples, block=args.block, out=args.out, lambda0_target=args.lambda0, tol=args.tol, seed=args.seed
        )
        status = run(args.command, cfg)
    except SNCertError as exc:
        print(f"sncert {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    print(f"sncert {args.command}: {'ok' if status == 0 else 'failed'}")
    return status


if __name__ == "__main__":
    sys.exit(main())
