"""``shadowsim`` command line.

Exit codes: 0 success, 1 configuration error, 2 failure while running.
The output directory is ``--out`` if given, else ``$SHADOWSIM_OUT``, else
``./results``.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import experiments
from .config import ConfigError, parse_config

log = logging.getLogger("shadowsim")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2
OUT_ENV = "SHADOWSIM_OUT"


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shadowsim", description="Ad hoc delivery-ratio simulator under shadowing.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./results)")
    common.add_argument("--seeds", type=_positive_int, help="replications per point")
    common.add_argument("--workers", type=_positive_int, help="worker processes")

    p_run = sub.add_parser("run", parents=[common], help="run a sweep described by a config file")
    p_run.add_argument("config", help="experiment config file")

    p_fig = sub.add_parser("builtin", parents=[common], help="emit a figure analogue")
    p_fig.add_argument("figure", choices=experiments.FIGURES)
    p_fig.add_argument("--duration", type=_positive_float, help="override simulated seconds per run")
    p_fig.add_argument("--range", type=_positive_float, default=250.0, dest="range_m",
                       help="transmission range for the fig5 hop estimate (m)")
    p_fig.add_argument("--per-seed", action="store_true", help="also write per-seed detail for fig9/fig10")
    return parser


def resolve_out_dir(arg: Optional[str]) -> Path:
    return Path(arg or os.environ.get(OUT_ENV) or "results")


def _builtin(args, out: Path) -> list[Path]:
    fig = args.figure
    seeds = args.seeds or 10
    workers = args.workers or 1
    if fig == "fig5":
        return [experiments.fig5(out, args.range_m)]
    if fig in ("fig6", "fig7", "fig8"):
        return [getattr(experiments, fig)(out)]
    if fig == "fig9":
        path, k = experiments.fig9(out, seeds, workers, args.duration, args.per_seed)
        print(f"calibrated k = {k:.6g}")
        return [path]
    return [experiments.fig10(out, seeds, workers, args.duration, args.per_seed)]


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; bad invocations count as config errors here
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    out = resolve_out_dir(args.out)
    try:
        if args.command == "run":
            spec = parse_config(args.config)
            if args.workers:
                spec.workers = args.workers
            log.info("running %s: %d points x %d seeds", spec.name, len(spec.sweep), args.seeds or spec.n_seeds)
            written = experiments.run_experiment(spec, out, args.seeds)
        else:
            written = _builtin(args, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any replication failure maps to exit 2
        log.debug("run failed", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for path in written:
        print(path)
    return EXIT_OK


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
