"""Command-line entry point.

    bayescausal <fig1|fig2|fig2-traj|fig3|verify> [--config PATH] [--seed U64]
                [--out DIR] [--set key=value ...] [--workers K]

Exit codes: 0 success, 1 validation or usage error, 2 verification failure,
3 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .config import UsageError, parse_config, parse_seed
from .experiments import run
from .model import ValidationError
from .output import OutputError, emit_report

log = logging.getLogger("bayescausal")

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_IO = 0, 1, 2, 3

SUBCOMMANDS = {
    "fig1": "unsupervised",
    "fig2": "supervised",
    "fig2-traj": "trajectory",
    "fig3": "semi_supervised",
    "verify": "verify",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bayescausal", description="Bayesian causal learning experiments and identity checks.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("subcommand", choices=list(SUBCOMMANDS))
    p.add_argument("--config", type=Path, help="flat JSON configuration file")
    p.add_argument("--seed", help="master seed, unsigned decimal or 0x-hex (default 0)")
    p.add_argument("--out", type=Path, default=Path("results"), help="output directory (default ./results)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--workers", type=int, default=1, help="worker processes for Monte Carlo cells")
    p.add_argument("--timestamp", action="store_true", help="record a generation time in meta.json")
    p.add_argument("--export-grids", action="store_true", help="verify: also write grid_*.csv densities")
    p.add_argument("--inject-violation", action="store_true", help=argparse.SUPPRESS)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _export_grids(cfg, out: Path) -> list[Path]:
    from .grid import GridSpec, grid_posterior
    from .verify import SLICE_RHO, battery_observations, SLICE_M, SLICE_N

    prior = cfg.prior_for(SLICE_RHO).to_gaussian()
    spec = GridSpec.around(prior)
    obs = battery_observations(cfg, SLICE_N, SLICE_M)
    out.mkdir(parents=True, exist_ok=True)
    return [
        grid_posterior(prior, type(obs)(), cfg.lik, spec).to_csv(out / "grid_prior.csv"),
        grid_posterior(prior, obs, cfg.lik, spec).to_csv(out / "grid_posterior.csv"),
    ]


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    mode = SUBCOMMANDS[args.subcommand]

    try:
        data = args.config.read_bytes() if args.config else None
    except OSError as exc:
        print(f"error: cannot read config {args.config}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO

    try:
        overrides = list(args.overrides)
        if args.seed is not None:
            overrides.append(f"master_seed={parse_seed(args.seed)}")
        cfg = parse_config(data, overrides, mode=mode)
        if args.workers < 1:
            raise ValidationError("workers: must be >= 1")
    except (UsageError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if mode == "verify":
        from .verify import run_verification

        results = run_verification(cfg, inject_violation=args.inject_violation)
        for r in results:
            print(r.line())
        ok = all(r.passed for r in results)
        print(f"{sum(r.passed for r in results)}/{len(results)} checks passed")
        if args.export_grids:
            try:
                for path in _export_grids(cfg, args.out):
                    print(f"wrote {path}")
            except OSError as exc:
                print(f"error: {exc}", file=sys.stderr)
                return EXIT_IO
        return EXIT_OK if ok else EXIT_VERIFY

    log.info("running %s with seed %d", args.subcommand, cfg.master_seed)
    report = run(cfg, workers=args.workers)
    try:
        paths = emit_report(report, args.out, timestamp=args.timestamp)
    except OutputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    for path in paths:
        print(f"wrote {path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
