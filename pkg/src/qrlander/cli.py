"""Command-line entry point: ``qrlander {train,evaluate,replay,params,plot}``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import List, Optional

from . import config as config_mod
from . import harness
from .errors import ConfigError, FormatError, InputError, StructureError, UsageError
from .plots import emit_plots

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_FORMAT, EXIT_USAGE = 0, 2, 3, 4, 1


def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML file with config keys; flags override it")
    group = p.add_argument_group("config keys")
    for key, default in config_mod.defaults().items():
        kind = "bool" if isinstance(default, bool) else type(default).__name__
        group.add_argument(_flag(key), dest=key, default=None, metavar=kind.upper(),
                           help=f"default {default!r}")


def _resolve_config(args) -> config_mod.RunConfig:
    values = {}
    if args.config:
        values.update(config_mod.flatten(config_mod.load_toml(args.config)))
    for key in config_mod.defaults():
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    return config_mod.build(values)


def _parse_sets(items: Optional[List[str]]) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def _parse_seeds(text: str) -> List[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"--seeds expects comma-separated integers, got {text!r}") from None
    if not seeds or len(set(seeds)) != len(seeds) or min(seeds) < 0:
        raise ConfigError("--seeds needs distinct non-negative integers")
    return seeds


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    if args.seeds:
        summaries = harness.run_seeds(cfg, _parse_seeds(args.seeds), workers=args.workers)
    else:
        def progress(info):
            if args.verbose:
                print(f"episode {info['episode']}: reward {info['total_reward']:.2f} "
                      f"steps {info['steps']} {info['outcome']}", flush=True)
        summaries = [harness.run_training(cfg, progress)]
    for s in summaries:
        print(f"{s['agent_kind']} seed {s['seed']}: {s['episodes']} episodes, {s['updates']} updates, "
              f"moving-average reward {s['final_moving_avg_reward']:.2f}, {s['wall_clock_s']:.1f}s")
    print(f"artifacts in {cfg.out_dir}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    summary = harness.evaluate(args.checkpoint, args.episodes, args.seed, _parse_sets(args.set))
    text = json.dumps(summary, indent=1, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_replay(args) -> int:
    info = harness.replay(args.checkpoint, args.out, args.seed, _parse_sets(args.set))
    print(f"{info['steps']} steps, reward {info['total_reward']:.2f}, {info['outcome']}; wrote {args.out}")
    return EXIT_OK


def cmd_params(args) -> int:
    cfg = _resolve_config(args)
    rows = harness.param_report(cfg.agent)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        harness.write_param_report(rows, args.out)
    print(harness.format_param_table(rows))
    return EXIT_OK


def cmd_plot(args) -> int:
    svg = emit_plots(args.inputs, args.out)
    files = [Path(p) / "episodes.csv" if Path(p).is_dir() else Path(p) for p in args.inputs]
    rows = harness.comparison_rows(files)
    table_path = Path(args.table) if args.table else svg.with_suffix(".csv")
    with open(table_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    print(harness.format_comparison(rows))
    print(f"wrote {svg} and {table_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qrlander", description="Rocket-landing RL with a variational quantum Q-network.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one agent (or one per seed)")
    _add_config_flags(p)
    p.add_argument("--seeds", help="comma-separated seeds; each run goes to <out-dir>/seed_<n>")
    p.add_argument("--workers", type=int, default=None, help="parallel processes for --seeds")
    p.add_argument("-v", "--verbose", action="store_true", help="print every episode")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="greedy episodes from a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key, e.g. wind_max=0")
    p.add_argument("--out", help="also write the summary JSON here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("replay", help="dump one greedy episode as a trajectory CSV")
    p.add_argument("checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("params", help="trainable parameter counts for all agents")
    _add_config_flags(p)
    p.add_argument("--out", help="CSV destination")
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("plot", help="SVG reward/loss charts and a comparison table")
    p.add_argument("inputs", nargs="+", help="episodes CSV files or run directories")
    p.add_argument("--out", required=True, help="SVG destination")
    p.add_argument("--table", help="comparison CSV destination (default: next to the SVG)")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InputError, StructureError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
