"""Command line entry point: ``marketsim <command> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import experiments as ex
from .lobster import generate_synthetic_stream, parse_messages, stream_stats, write_messages, write_orderbook


def _run(cfg: ex.ExperimentConfig, prefix: str, results) -> None:
    out = Path(cfg.output_dir)
    csvs = ex.emit_csv(results, out, prefix)
    svgs = ex.emit_svg(results, out, prefix)
    ex.write_config_echo(cfg, out)
    for p in csvs + svgs:
        print(p)


def cmd_replay_impact(args) -> int:
    cfg = ex.ExperimentConfig.load(args.config)
    if cfg.mode != "replay_impact":
        cfg = ex.ExperimentConfig.from_dict({**asdict(cfg), "mode": "replay_impact"})
    data = ex.ReplayData.from_config(cfg)
    results = ex.run_replay_impact(cfg, data)
    _run(cfg, "replay", results)
    if args.price_levels:
        stop = ex.parse_clock(cfg.end) + cfg.window_post_ms * ex.NS_PER_MS
        rows = ex.price_level_volume(data, stop)
        path = Path(cfg.output_dir) / "price_level_volume.csv"
        with open(path, "w") as fh:
            fh.write("time_s,price,log10_volume,mid\n")
            for r in rows:
                fh.write(",".join(repr(float(x)) if isinstance(x, float) else str(x) for x in r) + "\n")
        print(path)
    return 0


def cmd_iabs_impact(args) -> int:
    cfg = ex.ExperimentConfig.load(args.config)
    if cfg.mode != "iabs_impact":
        cfg = ex.ExperimentConfig.from_dict({**asdict(cfg), "mode": "iabs_impact"})
    _run(cfg, "iabs", ex.run_iabs_impact(cfg))
    return 0


def cmd_stats(args) -> int:
    s = stream_stats(parse_messages(args.messages))
    for name, value in asdict(s).items():
        print(f"{name}: {value:.3f}" if isinstance(value, float) else f"{name}: {value}")
    return 0


def cmd_gen_synthetic(args) -> int:
    start = ex.parse_clock(args.start)
    row, events = generate_synthetic_stream(args.seed, args.duration, start=start)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_messages(events, out / "messages.csv")
    write_orderbook([row], out / "orderbook.csv")
    print(f"wrote {len(events)} events to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="marketsim", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("replay-impact", help="market replay impact study")
    p.add_argument("--config", required=True)
    p.add_argument("--price-levels", action="store_true",
                   help="also export the baseline price-level volume table")
    p.set_defaults(func=cmd_replay_impact)

    p = sub.add_parser("iabs-impact", help="paired agent-based impact study")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_iabs_impact)

    p = sub.add_parser("stats", help="descriptive statistics of a LOBSTER message file")
    p.add_argument("--messages", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("gen-synthetic", help="write a synthetic LOBSTER message/orderbook pair")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--duration", type=float, default=3600.0, help="seconds")
    p.add_argument("--start", default="09:30:00")
    p.set_defaults(func=cmd_gen_synthetic)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
