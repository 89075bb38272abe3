"""Command line entry point.

One subcommand per experiment kind; every run writes a machine-readable
report plus per-series CSVs into the output directory and prints one
PASS/FAIL line per verdict. Exit code 0 means every verdict passed, 1 a
failed verdict or a blown-up trajectory, 2 a configuration problem.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from ..dynamics import BlowUpError
from .config import EXPERIMENT_KINDS, PROFILES, ConfigError, load_config
from .experiments import EXPERIMENTS
from .report import emit_report

_KIND_HELP = {
    "moment-growth": "ensemble moments of the smoothing functional",
    "smoothing": "alias for moment-growth",
    "exp-moment": "exponential moment estimators inside the kappa budget",
    "cont-dependence": "shared-noise pairs under initial perturbations",
    "control-decay": "damped linearized flow over a damping-band sweep",
    "irreducibility": "shifted system under a noise-amplitude sweep",
    "inequalities": "randomized checks of the standalone inequalities",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="felab",
        description="simulation laboratory for a stochastically forced, "
                    "fractionally dissipated vorticity equation",
    )
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in EXPERIMENT_KINDS:
        p = sub.add_parser(kind, help=_KIND_HELP[kind])
        p.add_argument("--config", default=None,
                       help="TOML experiment file")
        p.add_argument("--seed", type=int, default=None,
                       help="root seed (overrides the file)")
        p.add_argument("--out", default=None,
                       help="output directory (overrides the file)")
        p.add_argument("--paths", type=int, default=None,
                       help="number of trajectories")
        p.add_argument("--profile", choices=sorted(PROFILES),
                       default=None, help="resolution/ensemble preset")
        p.add_argument("--workers", type=int, default=None,
                       help="thread pool size (1 = serial)")
        p.add_argument("--plots", action="store_true",
                       help="also render SVG plots when matplotlib exists")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {
        key: getattr(args, key)
        for key in ("seed", "out", "paths", "profile", "workers")
        if getattr(args, key) is not None
    }
    if args.plots:
        overrides["plots"] = True
    try:
        cfg = load_config(args.config, kind=args.kind, overrides=overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        report = EXPERIMENTS[cfg.kind](cfg)
    except BlowUpError as exc:
        print(f"trajectory blew up: {exc}", file=sys.stderr)
        print("lower dt, raise the resolution, or shrink the forcing",
              file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    paths = emit_report(report, cfg.out_dir, plots=cfg.plots)
    for v in report.verdicts:
        tag = "PASS" if v.passed else "FAIL"
        print(f"[{tag}] {v.name}: {v.target}")
    for note in report.notes:
        print(f"note: {note}")
    print(f"report: {paths['json']}")
    return 0 if report.all_passed else 1


if __name__ == "__main__":
    sys.exit(main())
