"""Command line entry point: ``shelfrl <verb> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from .config import RunConfig, _coerce, desk_config

log = logging.getLogger("shelfrl")


def _option_table():
    """Map ``--kebab-name`` flags onto (section, field) of :class:`RunConfig`."""
    table = {}
    for sec in fields(RunConfig):
        for f in fields(sec.default_factory()):
            table[f.name.replace("_", "-")] = (sec.name, f.name)
    return table


OPTIONS = _option_table()


def _add_config_flags(p: argparse.ArgumentParser, seed_required: bool):
    p.add_argument("--config", type=Path, help="INI run configuration to start from")
    p.add_argument("--desk", action="store_true", help="start from the bundled small synthetic instance")
    group = p.add_argument_group("run configuration overrides")
    for flag, (section, name) in OPTIONS.items():
        if flag == "seed":
            continue
        group.add_argument(f"--{flag}", dest=f"opt_{section}__{name}", metavar="VALUE")
    p.add_argument("--seed", type=int, required=seed_required)


def _build_config(args) -> RunConfig:
    if args.config and args.desk:
        raise SystemExit("--config and --desk are mutually exclusive")
    if args.config:
        cfg = RunConfig.load(args.config)
    elif args.desk:
        cfg = desk_config()
    else:
        cfg = RunConfig()
    for key, raw in vars(args).items():
        if not key.startswith("opt_") or raw is None:
            continue
        section, name = key[4:].split("__")
        current = getattr(getattr(cfg, section), name)
        default = getattr(type(getattr(cfg, section))(), name)
        value = _coerce(default if default is not None else current, raw, name)
        cfg = cfg.override(section, **{name: value})
    if args.seed is not None:
        cfg = cfg.override("run", seed=args.seed)
    return cfg


def cmd_generate_data(args):
    from .data import generate_metadata, generate_orders
    from .harness import generator_config, write_orders_for

    cfg = _build_config(args)
    gen = generator_config(cfg)
    order_log = generate_orders(gen)
    rows = generate_metadata(order_log.product_ids, gen.rates(), seed=cfg.run.seed)
    orders, meta = write_orders_for(order_log, rows, args.out)
    print(f"wrote {orders} ({order_log.total_orders} orders) and {meta}")


def cmd_ingest(args):
    from .data import ingest_csv, write_orders_csv

    order_log = ingest_csv(args.source, seed=args.seed, days=args.days, periods_per_day=args.periods_per_day)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_orders_csv(order_log, out)
    print(f"wrote {out}: {len(order_log.product_ids)} products, {order_log.n_periods} periods")


def cmd_train(args):
    from .harness import run_training

    cfg = _build_config(args)
    out = run_training(cfg)
    print(out)


def cmd_evaluate(args):
    from .harness import run_evaluation

    m = run_evaluation(args.checkpoint)
    print(json.dumps(m.as_dict(), indent=2))


def cmd_heatmap(args):
    from .harness import emit_heatmaps

    for name, path in emit_heatmaps(args.checkpoint, args.resolution, args.out).items():
        print(f"{name}: {path}")


def cmd_report(args):
    from .harness import emit_reward_components, read_metrics_csv

    out = emit_reward_components(args.run_dir)
    rows = read_metrics_csv(Path(args.run_dir) / "metrics.csv")
    k = min(args.window, len(rows))
    head = sum(r["business_reward"] for r in rows[:k]) / k
    tail = sum(r["business_reward"] for r in rows[-k:]) / k
    print(f"{out}\nbusiness reward: first {k} episodes {head:.4f}, last {k} episodes {tail:.4f}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shelfrl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("generate-data", help="write a synthetic order log and catalog")
    _add_config_flags(p, seed_required=True)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.set_defaults(func=cmd_generate_data)

    p = sub.add_parser("ingest", help="convert an external order file to the timestamped schema")
    p.add_argument("source", type=Path)
    p.add_argument("--out", type=Path, required=True, help="output CSV")
    p.add_argument("--seed", type=int, default=0, help="seed for the date assignment")
    p.add_argument("--days", type=int, default=None)
    p.add_argument("--periods-per-day", type=int, default=4)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train an agent and write a run directory")
    _add_config_flags(p, seed_required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="greedy rollout of a checkpoint on the test split")
    p.add_argument("checkpoint", type=Path, help="checkpoint or run directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("heatmap", help="critic and policy grids over inventory x forecast")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("--resolution", type=int, default=11)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("report", help="per-episode reward components of a run")
    p.add_argument("run_dir", type=Path)
    p.add_argument("--window", type=int, default=20)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    from .harness import RunError

    try:
        args.func(args)
    except (RunError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
