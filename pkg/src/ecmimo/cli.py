"""Command-line experiment runner.

Subcommands: rate, converge, ber, energy.  Each takes --config, --seed,
--workers and --out, writes a CSV whose '#'-prefixed header embeds the
build id, the seed and the full resolved config, and renders a companion
PNG figure next to the CSV (suppress with --no-plot).
"""

import argparse
import hashlib
import logging
import sys
from pathlib import Path

from . import __version__
from .experiments import (
    KIND_BER,
    KIND_CONVERGE,
    KIND_ENERGY,
    KIND_RATE,
    RUNNERS,
    ConfigError,
    load_config,
)

log = logging.getLogger("ecmimo")

SUBCOMMAND_KINDS = {
    "rate": KIND_RATE,
    "converge": KIND_CONVERGE,
    "ber": KIND_BER,
    "energy": KIND_ENERGY,
}


def build_id() -> str:
    """Content hash of the installed package sources."""
    digest = hashlib.sha1()
    pkg_dir = Path(__file__).parent
    for path in sorted(pkg_dir.glob("*.py")):
        digest.update(path.name.encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()[:12]


def _format_cell(value) -> str:
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def write_csv(path, metadata, header, rows) -> None:
    lines = [f"# {k} = {v}" for k, v in metadata]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_format_cell(c) for c in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def run_experiment(kind, config_path, seed, workers, out_path, plot=True):
    cfg = load_config(config_path, kind, seed_override=seed)
    header, rows = RUNNERS[kind](cfg, workers=workers)
    metadata = [
        ("ecmimo", f"{kind} v{__version__}"),
        ("build_id", build_id()),
        ("seed", cfg["seed"]),
    ]
    metadata += [(f"cfg.{k}", v) for k, v in cfg.resolved_items()]
    write_csv(out_path, metadata, header, rows)
    log.info("wrote %s (%d rows)", out_path, len(rows))
    if plot:
        from .plotting import render_figure

        png = Path(out_path).with_suffix(".png")
        render_figure(kind, header, rows, png)
        log.info("wrote %s", png)
    return header, rows


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ecmimo",
        description="MIMO soft-detection experiments: mutual-information sweeps, "
        "EC convergence traces, coded BER and free-energy diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, kind in SUBCOMMAND_KINDS.items():
        p = sub.add_parser(name, help=f"run a {kind} experiment")
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        p.add_argument("--workers", type=int, default=1, help="worker processes")
        p.add_argument("--out", required=True, help="output CSV path")
        p.add_argument("--no-plot", action="store_true", help="skip the companion figure")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        run_experiment(
            SUBCOMMAND_KINDS[args.command],
            args.config,
            args.seed,
            args.workers,
            args.out,
            plot=not args.no_plot,
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
