"""Command-line front end.

Subcommands:
  simulate   roll out a non-learning policy (heuristics, the exact solver,
             or a checkpointed learner) over the configured cells
  train      train a learner at fixed multipliers (lambdas sweep)
  dual       run the constrained outer loop (budgets mode)
  evaluate   score a checkpointed learner without training
  dp-oracle  solve a tiny instance exactly and dump its policy/value tables
  presets    list built-in configs or write one out as YAML

Common flags: --config <path>, --seed <int> (replaces run.seeds with one
seed), --out <dir> (overrides run.out).  Worker-pool size comes from the
SCHEDLAB_WORKERS environment variable.  Exit codes: 0 success, 2 invalid
config or input, 3 training divergence.
"""

from __future__ import annotations

import argparse
import os
import sys

import yaml

from . import dp as dp_mod
from . import harness
from .agent import Rsd4Agent
from .errors import (AllocationError, ConfigError, DivergenceError,
                     StateCapError, TraceFormatError)

_USAGE_ERRORS = (ConfigError, TraceFormatError, AllocationError,
                 StateCapError, FileNotFoundError)


def _add_common(p):
    p.add_argument("--config", required=True, help="experiment config (YAML)")
    p.add_argument("--seed", type=int, default=None,
                   help="run a single seed instead of run.seeds")
    p.add_argument("--out", default=None, help="output directory override")


def _load(args):
    cfg = harness.load_config(args.config)
    if args.seed is not None:
        cfg.run["seeds"] = [args.seed]
    if args.out is not None:
        cfg.run["out"] = args.out
    if getattr(args, "checkpoint", None):
        cfg.algorithm["checkpoint"] = args.checkpoint
    return cfg


def _print_rows(rows):
    for r in rows:
        print(f"{r['algorithm']} cell={r['cell']} seed={r['seed']} "
              f"reward={r['reward']:.6g} throughput={r['throughput']:.6g} "
              f"resource={r['resource']:.6g}")


def _cmd_simulate(args):
    cfg = _load(args)
    name = cfg.algorithm["name"]
    if name in harness.LEARNERS and not cfg.algorithm.get("checkpoint"):
        raise ConfigError(
            f"{cfg.source}: simulate needs algorithm.checkpoint for {name}; "
            "use the train subcommand to fit one")
    rows = harness.run_experiment(cfg)
    _print_rows(rows)
    return 0


def _cmd_train(args):
    cfg = _load(args)
    name = cfg.algorithm["name"]
    if name not in harness.LEARNERS:
        raise ConfigError(f"{cfg.source}: train expects a learner algorithm "
                          f"({'|'.join(harness.LEARNERS)}), got {name}")
    if cfg.mode != "lambdas":
        raise ConfigError(f"{cfg.source}: train runs fixed multipliers; "
                          "budget-constrained runs belong to the dual subcommand")
    rows = harness.run_experiment(cfg)
    _print_rows(rows)
    return 0


def _cmd_dual(args):
    cfg = _load(args)
    if cfg.mode != "budgets":
        raise ConfigError(f"{cfg.source}: dual requires dual.budgets")
    rows = harness.run_experiment(cfg)
    _print_rows(rows)
    return 0


def _cmd_evaluate(args):
    cfg = _load(args)
    path = cfg.algorithm.get("checkpoint")
    if not path:
        raise ConfigError(f"{cfg.source}: evaluate needs algorithm.checkpoint")
    lam = cfg.cells[0] if cfg.mode == "lambdas" else 0.0
    out_dir = cfg.run["out"]
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for seed in cfg.run["seeds"]:
        env = harness.build_environment(cfg.environment, seed)
        adapter = harness.make_adapter(cfg, env)
        agent, _ = Rsd4Agent.restore(path)
        stats = agent.evaluate(adapter, lam=lam, seed=seed)
        rows.append((seed, stats["reward_per_slot"],
                     stats["throughput_per_slot"], stats["resource_per_slot"]))
        print(f"seed={seed} reward/slot={stats['reward_per_slot']:.6g} "
              f"throughput/slot={stats['throughput_per_slot']:.6g} "
              f"resource/slot={stats['resource_per_slot']:.6g}")
    with open(os.path.join(out_dir, "evaluate.csv"), "w") as fh:
        fh.write("seed,reward,throughput,resource\n")
        for seed, rew, thr, res in rows:
            fh.write("%d,%.12g,%.12g,%.12g\n" % (seed, rew, thr, res))
    return 0


def _cmd_dp_oracle(args):
    cfg = _load(args)
    if cfg.algorithm["name"] != "dp":
        raise ConfigError(f"{cfg.source}: dp-oracle expects algorithm.name: dp")
    if cfg.mode != "lambdas":
        raise ConfigError(f"{cfg.source}: dp-oracle solves fixed multipliers; "
                          "use the dual subcommand for budgets")
    out_dir = cfg.run["out"]
    os.makedirs(out_dir, exist_ok=True)
    seed = cfg.run["seeds"][0]
    env = harness.build_environment(cfg.environment, seed)
    dcfg = harness._dp_config(cfg.algorithm)
    mdp = dp_mod.build_mdp(env.users, env.e_max, dcfg)
    for vi, lam in enumerate(cfg.cells):
        sol = dp_mod.dp_optimal(env.users, env.e_max, float(lam),
                                config=dcfg, mdp=mdp)
        reward, resource, thr = sol.evaluate()
        tag = harness._cell_tag("lambdas", lam, vi)
        sol.dump_csv(os.path.join(out_dir, f"dp_{tag}_policy.csv"),
                     os.path.join(out_dir, f"dp_{tag}_value.csv"))
        print(f"lambda={format(float(lam), '.12g')} "
              f"gain={reward:.12g} resource={resource:.12g} "
              f"throughput={thr:.12g} states={mdp.n_states} "
              f"actions={mdp.n_actions}")
    return 0


def _cmd_presets(args):
    if not args.name:
        for name, fn in sorted(harness.PRESETS.items()):
            first = (fn.__doc__ or "").strip().splitlines()[0]
            print(f"{name}: {first}")
        return 0
    if args.name not in harness.PRESETS:
        raise ConfigError(f"unknown preset {args.name!r}; available: "
                          f"{sorted(harness.PRESETS)}")
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"{args.name}.yaml")
    with open(path, "w") as fh:
        yaml.safe_dump(harness.PRESETS[args.name](), fh,
                       sort_keys=False, default_flow_style=False)
    print(path)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="schedlab",
        description="Delay-constrained scheduling laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="roll out a non-learning policy")
    _add_common(p)
    p.add_argument("--checkpoint", default=None,
                   help="saved learner weights (for learner rollouts)")
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("train", help="train a learner at fixed multipliers")
    _add_common(p)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("dual", help="run the constrained outer loop")
    _add_common(p)
    p.set_defaults(fn=_cmd_dual)

    p = sub.add_parser("evaluate", help="score a checkpointed learner")
    _add_common(p)
    p.add_argument("--checkpoint", default=None,
                   help="saved learner weights (overrides algorithm.checkpoint)")
    p.set_defaults(fn=_cmd_evaluate)

    p = sub.add_parser("dp-oracle", help="exact solve of a tiny instance")
    _add_common(p)
    p.set_defaults(fn=_cmd_dp_oracle)

    p = sub.add_parser("presets", help="list or emit built-in configs")
    p.add_argument("name", nargs="?", default=None)
    p.add_argument("--out", default=None, help="directory for the YAML file")
    p.set_defaults(fn=_cmd_presets)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except DivergenceError as exc:
        where = f" (checkpoint: {exc.checkpoint_path})" if exc.checkpoint_path else ""
        print(f"error: training diverged: {exc}{where}", file=sys.stderr)
        return 3
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
