"""Command-line interface.

  anchorq train   --config PATH [--seed N] [--variant NAME] [--algo NAME] --out DIR
  anchorq collect --env ID --mode scripted|teleop --episodes N [--safe-only] --out FILE [--port P]
  anchorq eval    --checkpoint PATH --episodes N --seeds K [--out FILE]
  anchorq analyze --stats FILE --baseline NAME [--robust] [--out FILE]
  anchorq ablate  --config PATH --out DIR

Exit code 0 on success; nonzero with one machine-readable `error: ...` line
on stderr otherwise.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

from . import analysis, train
from .agent import VARIANTS
from .config import ConfigError, RunConfig, load_config
from .teleop import TeleopServer


def _cmd_train(args) -> int:
    with open(args.config, "r", encoding="utf-8") as f:
        source = f.read()
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.variant is not None:
        cfg.variant = args.variant
    if args.algo is not None:
        cfg.algo = args.algo
    cfg.validate()
    out = train.run_training(cfg, args.out, config_source_text=source)
    print(out)
    return 0


def _cmd_collect(args) -> int:
    cfg = RunConfig() if args.config is None else load_config(args.config)
    cfg.env = args.env
    if args.seed is not None:
        cfg.seed = args.seed
    cfg.validate()
    if args.mode == "scripted":
        retained, attempts = train.collect_scripted(cfg, args.episodes, args.out, safe_only=args.safe_only)
        print(f"{args.out}: {retained} episodes retained ({attempts} attempts)")
        return 0
    server = TeleopServer(cfg, args.out, safe_only=args.safe_only, port=args.port)
    print(f"teleop server on port {server.port}; collecting {args.episodes} episodes", flush=True)
    try:
        server.serve_until(target_episodes=args.episodes)
    except KeyboardInterrupt:
        server.stop()
    print(f"{args.out}: {server.retained_total} episodes retained")
    return 0


def _cmd_eval(args) -> int:
    bundle = train.load_bundle(args.checkpoint)
    cfg = bundle.cfg
    stats, _ = analysis.evaluate_actor(
        bundle.actor, lambda: cfg.make_env(seed=0),
        episodes=args.episodes, seeds=args.seeds, algo=args.algo or cfg.algo,
        pooled=cfg.pooled_stats,
    )
    text = analysis.stats_to_csv([stats])
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(text)
    print(text, end="")
    return 0


def _cmd_analyze(args) -> int:
    with open(args.stats, "r", encoding="utf-8") as f:
        rows = analysis.stats_from_csv(f.read())
    by_name = {r.algo: r for r in rows}
    if args.baseline not in by_name:
        raise ValueError(f"baseline {args.baseline!r} not present in {args.stats}")
    baseline = by_name[args.baseline]
    candidates = [r for r in rows if r.algo != args.baseline]
    std_rows = analysis.tradeoff_table(candidates, baseline, robust=False)
    rob_rows = analysis.tradeoff_table(candidates, baseline, robust=True)
    std_winner = analysis.select_best(std_rows, baseline)
    rob_winner = analysis.select_best(rob_rows, baseline)
    out = analysis.tradeoff_table_text(std_rows, baseline, winner=std_winner)
    out += analysis.tradeoff_table_text(rob_rows, baseline, winner=rob_winner)
    out += f"standard winner: {std_winner}\nrobust winner: {rob_winner}\n"
    print(out, end="")
    if args.out:
        chosen = rob_rows if args.robust else std_rows
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(analysis.tradeoff_table_csv(chosen))
    return 0


def _cmd_ablate(args) -> int:
    cfg = load_config(args.config)
    os.makedirs(args.out, exist_ok=True)
    manifest = {"variants": list(VARIANTS), "runs": {}}
    results = []
    for variant in VARIANTS:
        run_cfg = load_config(args.config)
        run_cfg.variant = variant
        run_dir = os.path.join(args.out, variant)
        train.run_training(run_cfg, run_dir)
        bundle = train.load_bundle(os.path.join(run_dir, "checkpoint_final.json"))
        stats, _ = analysis.evaluate_actor(
            bundle.actor, lambda: run_cfg.make_env(seed=0),
            episodes=cfg.eval_episodes, seeds=cfg.eval_seeds, algo=variant,
        )
        results.append(stats)
        manifest["runs"][variant] = run_dir
    with open(os.path.join(args.out, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)
    table_path = os.path.join(args.out, "ablation.csv")
    with open(table_path, "w", encoding="utf-8") as f:
        f.write(analysis.stats_to_csv(results))
    with open(table_path, "r", encoding="utf-8") as f:
        print(f.read(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="anchorq", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="cmd", required=True)

    t = sub.add_parser("train", help="run one training run")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--variant", choices=VARIANTS, default=None)
    t.add_argument("--algo", choices=("anchorq", "sac", "sac_gail"), default=None)
    t.add_argument("--out", required=True)
    t.set_defaults(fn=_cmd_train)

    c = sub.add_parser("collect", help="collect demonstrations")
    c.add_argument("--env", required=True)
    c.add_argument("--mode", choices=("scripted", "teleop"), required=True)
    c.add_argument("--episodes", type=int, required=True)
    c.add_argument("--safe-only", action="store_true")
    c.add_argument("--out", required=True)
    c.add_argument("--port", type=int, default=None)
    c.add_argument("--config", default=None)
    c.add_argument("--seed", type=int, default=None)
    c.set_defaults(fn=_cmd_collect)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--episodes", type=int, required=True)
    e.add_argument("--seeds", type=int, required=True)
    e.add_argument("--algo", default=None)
    e.add_argument("--out", default=None)
    e.set_defaults(fn=_cmd_eval)

    a = sub.add_parser("analyze", help="trade-off tables from a stats CSV")
    a.add_argument("--stats", required=True)
    a.add_argument("--baseline", required=True)
    a.add_argument("--robust", action="store_true")
    a.add_argument("--out", default=None)
    a.set_defaults(fn=_cmd_analyze)

    b = sub.add_parser("ablate", help="run every loss-term variant with shared seeds")
    b.add_argument("--config", required=True)
    b.add_argument("--out", required=True)
    b.set_defaults(fn=_cmd_ablate)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ValueError, FileNotFoundError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
