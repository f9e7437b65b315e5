"""Command-line entry point: ``pocar train|eval|communities|bench``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import harness
from .envs.graph import SocialGraph, communities_json, girvan_newman_bisect, karate_graph, read_edgelist


def _train(args) -> int:
    cfg = harness.load_config(args.config, agent=args.agent, seed=args.seed)

    def progress(row):
        if args.verbose:
            print(f"iter {row['iteration']:4d}  reward {row['mean_reward']:.4f}  delta {row['mean_delta']:.4f}",
                  file=sys.stderr)

    art = harness.run_training(cfg, args.out or cfg.out, progress=progress)
    print(f"checkpoint {art.checkpoint}")
    print(f"log {art.log}")
    return 0


def _eval(args) -> int:
    cfg = harness.load_config(args.config, agent=args.agent, seed=args.seed, trials=args.trials,
                              eval_mode=args.mode, workers=args.workers)
    series = harness.run_eval(cfg, args.checkpoint)
    out = Path(args.out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{cfg.env}_{cfg.agent}_eval"
    for fmt in (("csv", "json") if args.format == "both" else (args.format,)):
        path = harness.export_metrics(series, out / f"{stem}.{fmt}", fmt)
        print(f"{fmt} {path}")
    print(f"cumulative reward {series.cumulative_reward().mean():.4f} "
          f"mean delta {series.delta_summary().mean():.4f}")
    return 0


def _communities(args) -> int:
    if args.graph == "karate":
        graph = karate_graph()
    else:
        n, edges = read_edgelist(args.graph)
        graph = SocialGraph(n, tuple(edges), girvan_newman_bisect(n, edges))
    doc = communities_json(graph)
    if args.out:
        Path(args.out).write_text(doc + "\n")
    else:
        print(doc)
    return 0


def _bench(args) -> int:
    from . import bench

    checks = bench.run_suite(args.suite, seeds=range(args.seeds), workdir=args.out)
    for c in checks:
        print(c.line())
    return 0 if all(c.passed for c in checks) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pocar", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a PPO variant and write a checkpoint plus CSV log")
    t.add_argument("--config", required=True)
    t.add_argument("--agent", help="override the config's agent (g_ppo, r_ppo, a_ppo)")
    t.add_argument("--seed", type=int)
    t.add_argument("--out")
    t.set_defaults(func=_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint or baseline over several trials")
    e.add_argument("--config", required=True)
    e.add_argument("--checkpoint")
    e.add_argument("--agent", help="override the config's agent")
    e.add_argument("--trials", type=int)
    e.add_argument("--seed", type=int, help="base seed; trial i uses seed + i")
    e.add_argument("--mode", choices=("sample", "argmax"))
    e.add_argument("--workers", type=int)
    e.add_argument("--format", choices=("csv", "json", "both"), default="both")
    e.add_argument("--out")
    e.set_defaults(func=_eval)

    c = sub.add_parser("communities", help="Girvan-Newman bisection of an edge list")
    c.add_argument("--graph", default="karate", help="edge list path, or 'karate' for the bundled graph")
    c.add_argument("--out")
    c.set_defaults(func=_communities)

    b = sub.add_parser("bench", help="run a benchmark suite and report pass/fail lines")
    b.add_argument("--suite", required=True,
                   choices=("smoke", "baselines", "attention", "attention-hard", "lending", "disease"))
    b.add_argument("--seeds", type=int, default=5)
    b.add_argument("--out", help="directory for intermediate checkpoints (default: temporary)")
    b.set_defaults(func=_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (harness.ConfigError, ValueError, OSError, KeyError) as exc:
        print(f"pocar {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
