"""Experiment driver: declarative configs, presets, sweep cells, metric CSVs.

A config file (YAML) has four sections:

  environment:  kind: single-hop | multihop, plus the generator specs
  algorithm:    name: rsd4 | td3-like | sd3-like | edf | uniform | static | dp
                (learner keys pass through to AgentConfig; decompose: bool;
                 checkpoint: path for rollout-only use; warm_start: bool)
  dual:         either lambdas: [..] (fixed-multiplier sweep) or
                budgets: [..] (constrained runs through the dual loop),
                plus lambda0 / alpha0 / delta / max_iters
  run:          seeds: [..], slots: int, out: dir, eval-sizing keys

A run executes every (sweep value, seed) cell, writes one time-series or
learning-curve CSV per cell, a per-cell metric table (cells.csv), and an
aggregate over seeds (summary.csv).  All floats are formatted with "%.12g"
so re-running an identical config byte-reproduces every file.  Units in
cells.csv / summary.csv are per slot for every algorithm, which makes
baselines, the exact solver, and learners directly comparable.

Reward conventions per mode: in a lambdas sweep the reward column is the
penalized objective (throughput - lam * resource) at the cell's multiplier;
in budget mode every algorithm reports the constrained objective, i.e. the
plain throughput, with the resource column showing whether the budget held.
Budget-spending heuristics (edf / uniform / static) only exist in budget
mode; configuring them under a lambdas sweep is a config error.

The static baseline is solved once per cell against the expected per-bucket
occupancy (the arrival mean, since a job crosses each bucket at most once)
with channels averaged under their stationary law, then its per-job
allocation is applied to whatever jobs are actually buffered each slot.

Cells are independent; set SCHEDLAB_WORKERS=k (or pass workers=k) to run
them in a process pool.  Results are ordered deterministically either way.
"""

from __future__ import annotations

import csv
import os
from concurrent import futures
from dataclasses import dataclass

import numpy as np
import yaml

from . import baselines
from . import dp as dp_mod
from . import dual as dual_mod
from . import sources as src
from .agent import AgentConfig, DecomposedAdapter, Rsd4Agent, adapt
from .decomposition import DecomposedEnv
from .env import (DynamicsPhase, ObservabilityMask, SingleHopEnv,
                  SwitchSchedule, UserSpec)
from .errors import ConfigError
from .multihop import FlowSpec, MultiHopEnv

__all__ = [
    "ExperimentConfig", "load_config", "config_from_dict",
    "build_environment", "ingest_trace",
    "fourusers_preset", "multihop_preset", "tiny_preset", "PRESETS",
    "run_experiment", "run_cell", "make_adapter",
    "WORKERS_VAR", "worker_count",
]

WORKERS_VAR = "SCHEDLAB_WORKERS"
LEARNERS = ("rsd4", "td3-like", "sd3-like")
HEURISTICS = ("edf", "uniform", "static")
ALGORITHMS = LEARNERS + HEURISTICS + ("dp",)

# AgentConfig fields a config file may set directly.
_AGENT_KEYS = {
    "hidden_fc", "hidden_lstm", "hidden_merge", "gamma", "tau_soft",
    "actor_lr", "critic_lr", "explore_sigma", "target_sigma", "noise_clip",
    "beta_softmax", "n_noise", "batch_size", "episode_length", "episodes",
    "policy_delay", "replay_capacity", "warmup_episodes", "selection",
    "eval_every", "eval_episodes", "param_norm_limit",
}
_ALGO_EXTRA = {"name", "decompose", "checkpoint", "warm_start", "per_user",
               "grid", "grid_levels", "state_cap", "action_cap", "recurrent"}


def worker_count(explicit=None):
    """Resolve the worker-pool size: argument, then env var, then 1."""
    if explicit is not None:
        n = int(explicit)
    else:
        n = int(os.environ.get(WORKERS_VAR, "1"))
    if n < 1:
        raise ConfigError(f"worker count must be >= 1, got {n}")
    return n


# ---------- config loading ----------


@dataclass
class ExperimentConfig:
    environment: dict
    algorithm: dict
    dual: dict
    run: dict
    mode: str           # "lambdas" or "budgets"
    cells: list         # sweep values (floats, or node->budget dicts)
    source: str = "<config>"

    def as_dict(self):
        return {"environment": self.environment, "algorithm": self.algorithm,
                "dual": self.dual, "run": self.run}


def _need_mapping(value, where):
    if not isinstance(value, dict):
        raise ConfigError(f"{where} must be a mapping, got {type(value).__name__}")
    return value


def config_from_dict(data, source="<config>"):
    data = _need_mapping(data, f"{source}: top level")
    unknown = set(data) - {"environment", "algorithm", "dual", "run"}
    if unknown:
        raise ConfigError(f"{source}: unknown top-level sections {sorted(unknown)}")
    for section in ("environment", "algorithm", "run"):
        if section not in data:
            raise ConfigError(f"{source}: missing required section '{section}'")
    env = _need_mapping(data["environment"], f"{source}: environment")
    algo = _need_mapping(data["algorithm"], f"{source}: algorithm")
    run = dict(_need_mapping(data["run"], f"{source}: run"))
    dual = dict(_need_mapping(data.get("dual", {}), f"{source}: dual"))

    name = algo.get("name")
    if name not in ALGORITHMS:
        raise ConfigError(f"{source}: algorithm.name must be one of "
                          f"{list(ALGORITHMS)}, got {name!r}")
    bad_keys = set(algo) - _AGENT_KEYS - _ALGO_EXTRA
    if bad_keys:
        raise ConfigError(f"{source}: unknown algorithm keys {sorted(bad_keys)}")

    seeds = run.get("seeds")
    if not isinstance(seeds, list) or not seeds or \
            not all(isinstance(s, int) for s in seeds):
        raise ConfigError(f"{source}: run.seeds must be a nonempty list of integers")
    run.setdefault("slots", 5000)
    run.setdefault("out", "results")
    if not isinstance(run["slots"], int) or run["slots"] < 1:
        raise ConfigError(f"{source}: run.slots must be a positive integer")

    lambdas = dual.get("lambdas")
    budgets = dual.get("budgets")
    if lambdas is not None and budgets is not None:
        raise ConfigError(f"{source}: dual.lambdas and dual.budgets are exclusive")
    if lambdas is not None:
        if name in HEURISTICS:
            raise ConfigError(
                f"{source}: {name} spends a budget each slot; it has no role in a "
                "lambdas sweep; use dual.budgets")
        cells, mode = list(lambdas), "lambdas"
        if not cells:
            raise ConfigError(f"{source}: dual.lambdas must be nonempty")
        for v in cells:
            if not isinstance(v, (int, float, dict)) or \
                    (isinstance(v, (int, float)) and v < 0):
                raise ConfigError(f"{source}: dual.lambdas entries must be "
                                  f"multipliers >= 0 (or node maps), got {v!r}")
    elif budgets is not None:
        cells, mode = list(budgets), "budgets"
        if not cells:
            raise ConfigError(f"{source}: dual.budgets must be nonempty")
        for v in cells:
            if isinstance(v, dict):
                continue
            if not isinstance(v, (int, float)) or v < 0:
                raise ConfigError(f"{source}: dual.budgets entries must be "
                                  f">= 0 (or node maps), got {v!r}")
    else:
        if name in HEURISTICS:
            raise ConfigError(f"{source}: algorithm {name} requires dual.budgets")
        cells, mode = [0.0], "lambdas"
    dual.setdefault("lambda0", 0.0)
    dual.setdefault("alpha0", 0.1)
    dual.setdefault("delta", 1e-4)
    dual.setdefault("max_iters", 40)

    kind = env.get("kind", "single-hop")
    if kind not in ("single-hop", "multihop"):
        raise ConfigError(f"{source}: environment.kind must be single-hop|multihop")
    if kind == "multihop" and name in HEURISTICS:
        raise ConfigError(f"{source}: {name} is a single-hop baseline")
    if kind == "multihop" and algo.get("decompose"):
        raise ConfigError(f"{source}: decomposition applies to single-hop users")
    return ExperimentConfig(environment=env, algorithm=algo, dual=dual,
                            run=run, mode=mode, cells=cells, source=source)


def load_config(path):
    """Parse and validate a YAML experiment config."""
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    return config_from_dict(data, source=str(path))


# ---------- environment construction ----------


def _trace_column(spec, where):
    path = spec.get("path")
    if not path:
        raise ConfigError(f"{where}: trace spec needs a 'path'")
    try:
        columns, _ = src.read_trace(path)
    except FileNotFoundError:
        raise ConfigError(f"{where}: missing trace file {path}") from None
    user = spec.get("user")
    if user is None:
        if len(columns) != 1:
            raise ConfigError(f"{where}: trace {path} holds users "
                              f"{sorted(columns)}; specify 'user'")
        user = next(iter(columns))
    if user not in columns:
        raise ConfigError(f"{where}: trace {path} has no user {user}")
    return columns[user]


def build_arrival_source(spec, where):
    spec = _need_mapping(spec, where)
    kind = spec.get("kind")
    if kind == "bernoulli":
        return src.BernoulliArrivals(spec.get("p", 0.5))
    if kind == "poisson":
        return src.PoissonArrivals(spec.get("rate", 1.0), cap=spec.get("cap", 16))
    if kind == "trace":
        return src.TraceArrivals(_trace_column(spec, where))
    raise ConfigError(f"{where}: arrival kind must be bernoulli|poisson|trace, "
                      f"got {kind!r}")


def build_channel_source(spec, where):
    spec = _need_mapping(spec, where)
    kind = spec.get("kind")
    if kind == "markov":
        return src.MarkovChannel(
            levels=tuple(spec.get("levels", (1.0, 2.0, 3.0, 4.0))),
            mean=spec.get("mean"),
            persistence=spec.get("persistence", 0.5),
            stationary=spec.get("stationary"))
    if kind == "trace":
        levels = spec.get("levels")
        if levels is None:
            raise ConfigError(f"{where}: channel traces need 'levels'")
        return src.TraceChannel(_trace_column(spec, where), levels=tuple(levels))
    raise ConfigError(f"{where}: channel kind must be markov|trace, got {kind!r}")


def build_mask(env_section, where):
    spec = _need_mapping(env_section.get("mask", {}), f"{where}.mask")
    switches = None
    raw_switches = env_section.get("switches")
    if raw_switches is not None:
        if not isinstance(raw_switches, list) or not raw_switches:
            raise ConfigError(f"{where}.switches must be a nonempty list")
        phases = []
        for k, entry in enumerate(raw_switches):
            entry = _need_mapping(entry, f"{where}.switches[{k}]")
            means = entry.get("channel_means")
            phases.append(DynamicsPhase(
                slot=entry.get("slot", 0),
                arrival_scale=entry.get("arrival_scale", 1.0),
                channel_means=None if means is None else list(means)))
        switches = SwitchSchedule(phases)
    return ObservabilityMask(
        buffers=bool(spec.get("buffers", True)),
        arrivals=bool(spec.get("arrivals", False)),
        channels=bool(spec.get("channels", True)),
        service_period=int(env_section.get("hidden_period",
                                           spec.get("service_period", 1))),
        switches=switches)


def build_environment(env_section, seed):
    """Instantiate the environment a config section describes."""
    env_section = _need_mapping(env_section, "environment")
    kind = env_section.get("kind", "single-hop")
    e_max = float(env_section.get("e_max", 2.0))
    if kind == "single-hop":
        raw_users = env_section.get("users")
        if not isinstance(raw_users, list) or not raw_users:
            raise ConfigError("environment.users must be a nonempty list")
        users = []
        for i, u in enumerate(raw_users, start=1):
            u = _need_mapping(u, f"environment.users[{i - 1}]")
            users.append(UserSpec(
                index=i,
                deadline=int(u.get("deadline", 1)),
                weight=float(u.get("weight", 1.0)),
                distance=float(u.get("distance", 1.0)),
                arrivals=build_arrival_source(
                    u.get("arrivals", {"kind": "bernoulli", "p": 0.5}),
                    f"environment.users[{i - 1}].arrivals"),
                channel=build_channel_source(
                    u.get("channel", {"kind": "markov"}),
                    f"environment.users[{i - 1}].channel")))
        mask = build_mask(env_section, "environment")
        return SingleHopEnv(users, e_max=e_max, mask=mask, seed=seed)
    raw_flows = env_section.get("flows")
    if not isinstance(raw_flows, list) or not raw_flows:
        raise ConfigError("environment.flows must be a nonempty list")
    flows = []
    for i, f in enumerate(raw_flows, start=1):
        f = _need_mapping(f, f"environment.flows[{i - 1}]")
        path = f.get("path")
        if not isinstance(path, list) or len(path) < 2:
            raise ConfigError(f"environment.flows[{i - 1}].path must list >= 2 nodes")
        hops = len(path) - 1
        chan_specs = f.get("channels", [{"kind": "markov"}] * hops)
        if len(chan_specs) != hops:
            raise ConfigError(f"environment.flows[{i - 1}]: need one channel "
                              f"spec per hop ({hops})")
        flows.append(FlowSpec(
            index=i, path=list(path),
            deadline=int(f.get("deadline", 1)),
            weight=float(f.get("weight", 1.0)),
            arrivals=build_arrival_source(
                f.get("arrivals", {"kind": "bernoulli", "p": 0.5}),
                f"environment.flows[{i - 1}].arrivals"),
            channels=[build_channel_source(
                c, f"environment.flows[{i - 1}].channels[{j}]")
                for j, c in enumerate(chan_specs)],
            distances=list(f.get("distances", [1.0] * hops))))
    return MultiHopEnv(
        flows, e_max=e_max, seed=seed,
        observe_buffers=bool(env_section.get("observe_buffers", True)),
        observe_channels=bool(env_section.get("observe_channels", True)))


# ---------- trace ingestion ----------


def ingest_trace(path, kind="arrivals", levels=None):
    """Load a slot,user,value trace into replayable sources.

    Returns (sources, report): per-user source objects plus a summary dict
    with each user's empirical mean (rate for arrivals, level for channels).
    """
    columns, means = src.read_trace(path)
    sources, report = {}, {}
    if kind == "arrivals":
        for user, col in columns.items():
            sources[user] = src.TraceArrivals(col)
            report[user] = {"mean_rate": float(means[user]),
                            "slots": int(len(col))}
    elif kind == "channels":
        if levels is None:
            raise ConfigError("channel traces need the 'levels' value table")
        lv = np.asarray(levels, dtype=float)
        for user, col in columns.items():
            sources[user] = src.TraceChannel(col, levels=tuple(lv))
            report[user] = {"mean_level": float(lv[np.asarray(col)].mean()),
                            "slots": int(len(col))}
    else:
        raise ConfigError(f"trace kind must be arrivals|channels, got {kind!r}")
    return sources, report


# ---------- presets ----------


def fourusers_preset():
    """Four-user single-hop workload with heterogeneous traffic: mean rates
    (1.96, 0.91, 2.46, 0.70), deadlines (6, 6, 1, 1), mean channel levels
    (1.79, 1.83, 1.82, 1.77)."""
    rates = (1.96, 0.91, 2.46, 0.70)
    deadlines = (6, 6, 1, 1)
    chan_means = (1.79, 1.83, 1.82, 1.77)
    users = [{
        "deadline": d,
        "weight": 1.0,
        "distance": 1.0,
        "arrivals": {"kind": "poisson", "rate": r, "cap": 8},
        "channel": {"kind": "markov", "levels": [1.0, 2.0, 3.0],
                    "mean": m, "persistence": 0.5},
    } for r, d, m in zip(rates, deadlines, chan_means)]
    return {
        "environment": {"kind": "single-hop", "e_max": 2.0, "users": users,
                        "mask": {"buffers": True, "arrivals": False,
                                 "channels": True}},
        "algorithm": {"name": "edf"},
        "dual": {"budgets": [10.0]},
        "run": {"seeds": [0, 1, 2, 3, 4], "slots": 5000, "out": "results"},
    }


def multihop_preset():
    """Six-node line-and-branch topology with 12 flows: 3 on path 1-2-3-5,
    4 on path 2-4-6, 5 on path 2-3; deadlines cycle through 3, 4, 5; the
    four scheduling nodes 1..4 carry budgets (10, 30, 0.3, 3)."""
    paths = [[1, 2, 3, 5]] * 3 + [[2, 4, 6]] * 4 + [[2, 3]] * 5
    deadline_cycle = (3, 4, 5)
    flows = []
    for i, path in enumerate(paths):
        hops = len(path) - 1
        flows.append({
            "path": path,
            "deadline": deadline_cycle[i % 3],
            "weight": 1.0,
            "arrivals": {"kind": "poisson", "rate": 0.8, "cap": 4},
            "channels": [{"kind": "markov", "levels": [1.0, 2.0, 3.0],
                          "mean": 2.0, "persistence": 0.5}] * hops,
            "distances": [1.0] * hops,
        })
    return {
        "environment": {"kind": "multihop", "e_max": 2.0, "flows": flows},
        "algorithm": {"name": "rsd4", "episodes": 200, "episode_length": 50},
        "dual": {"budgets": [{1: 10.0, 2: 30.0, 3: 0.3, 4: 3.0}],
                 "alpha0": 0.05, "delta": 1e-3, "max_iters": 12},
        "run": {"seeds": [0, 1, 2, 3, 4], "slots": 5000, "out": "results"},
    }


def tiny_preset():
    """One user, deadline 1, Bernoulli(0.5) arrivals, two-level channel;
    small enough for the exact solver, used throughout the test suite."""
    return {
        "environment": {
            "kind": "single-hop", "e_max": 1.0,
            "users": [{
                "deadline": 1, "weight": 1.0, "distance": 1.0,
                "arrivals": {"kind": "bernoulli", "p": 0.5},
                "channel": {"kind": "markov", "levels": [1.0, 2.0],
                            "mean": 1.5, "persistence": 0.5},
            }],
            "mask": {"buffers": True, "arrivals": False, "channels": True},
        },
        "algorithm": {"name": "dp", "grid": [0.0, 1.0]},
        "dual": {"lambdas": [0.3]},
        "run": {"seeds": [0], "slots": 2000, "out": "results"},
    }


PRESETS = {"fourusers": fourusers_preset, "multihop": multihop_preset,
           "tiny": tiny_preset}


# ---------- cell plumbing ----------


def _fmt(x):
    return format(float(x), ".12g")


def _cell_tag(mode, value, value_index):
    if isinstance(value, dict):
        return f"{'lam' if mode == 'lambdas' else 'e0'}set{value_index}"
    return f"{'lam' if mode == 'lambdas' else 'e0'}{_fmt(value)}"


def _cell_label(value):
    if isinstance(value, dict):
        return "{" + ";".join(f"{k}:{_fmt(v)}" for k, v in sorted(value.items())) + "}"
    return _fmt(value)


def _write_series(path, rows, header=("slot", "throughput", "resource", "reward")):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([row[0]] + [_fmt(v) for v in row[1:]])


def _series_means(rows):
    arr = np.asarray([r[1:] for r in rows], dtype=float)
    return arr.mean(axis=0)   # throughput, resource, reward


# ---------- heuristic baseline cells ----------


def _static_allocation(env, budget):
    """Solve the fixed per-job allocation once, with channels averaged under
    their stationary law and bucket occupancy set to the arrival mean."""
    buffers, laws = [], []
    for u in env.users:
        occ = np.zeros(u.deadline + 1)
        occ[1:] = u.arrivals.mean()
        buffers.append(occ)
        if hasattr(u.channel, "stationary"):
            laws.append((np.asarray(u.channel.levels, dtype=float),
                         np.asarray(u.channel.stationary(), dtype=float)))
        elif hasattr(u.channel, "levels") and hasattr(u.channel, "indices"):
            lv = np.asarray(u.channel.levels, dtype=float)
            counts = np.bincount(u.channel.indices, minlength=len(lv))
            laws.append((lv, counts / counts.sum()))
        else:
            raise ConfigError(f"user {u.index}: static baseline needs a channel "
                              "with a stationary law or a trace")
    problem = baselines.StaticProblem(
        buffers=buffers, weights=[u.weight for u in env.users],
        distances=[u.distance for u in env.users], e_max=env.e_max,
        budget=float(budget), channel_laws=laws,
        success_model=env.success_model)
    return baselines.static_program(problem)


def _heuristic_cell(cfg, env, name, budget, slots):
    per_user = bool(cfg.algorithm.get("per_user", False))
    static_plan = _static_allocation(env, budget) if name == "static" else None
    env.reset()
    rows = []
    for t in range(slots):
        bufs, _, _ = env.component_view()
        if name == "edf":
            alloc, _ = baselines.edf(bufs, budget, env.e_max, per_user=per_user)
        elif name == "uniform":
            alloc, _ = baselines.uniform(bufs, budget, env.e_max)
        else:
            alloc = static_plan
        outcome = env.step(alloc, lam=0.0)
        rows.append((t, outcome.throughput, outcome.resource, outcome.reward))
    return rows


# ---------- exact-solver cells ----------


def _dp_config(algo):
    kwargs = {}
    if algo.get("grid") is not None:
        kwargs["grid"] = tuple(float(g) for g in algo["grid"])
    if algo.get("grid_levels") is not None:
        kwargs["grid_levels"] = int(algo["grid_levels"])
    for key in ("state_cap", "action_cap"):
        if algo.get(key) is not None:
            kwargs[key] = int(algo[key])
    return dp_mod.DpConfig(**kwargs)


def _dp_rollout(env, solution, slots):
    """Simulate the exact policy; reads true state, so masks do not apply."""
    levels = [list(np.asarray(u.channel.levels, dtype=float)) for u in env.users]
    env.reset()
    rows = []
    for t in range(slots):
        bufs, _, chans = env.component_view()
        key_bufs = [tuple(int(c) for c in b[1:]) for b in bufs]
        key_chans = [levels[i].index(float(chans[i])) for i in range(len(chans))]
        alloc = solution.act(key_bufs, key_chans)
        outcome = env.step(alloc, lam=solution.lam)
        rows.append((t, outcome.throughput, outcome.resource, outcome.reward))
    return rows


def _dp_cell(cfg, env, value, seed, out_dir, tag):
    dcfg = _dp_config(cfg.algorithm)
    mdp = dp_mod.build_mdp(env.users, env.e_max, dcfg)
    if cfg.mode == "lambdas":
        solution = dp_mod.dp_optimal(env.users, env.e_max, float(value),
                                     config=dcfg, mdp=mdp)
        reward, resource, thr = solution.evaluate()
    else:
        def inner(lam):
            sol = dp_mod.dp_optimal(env.users, env.e_max, lam,
                                    config=dcfg, mdp=mdp)
            _, spend, thr_in = sol.evaluate()
            return dual_mod.InnerSolution(policy=sol, resource=spend,
                                          throughput=thr_in)
        result = dual_mod.solve_constrained(
            inner, float(value), lam0=cfg.dual["lambda0"],
            alpha0=cfg.dual["alpha0"], delta=cfg.dual["delta"],
            max_iters=cfg.dual["max_iters"],
            csv_path=os.path.join(out_dir, f"dp_{tag}_s{seed}_dual.csv"))
        solution = result.policy
        _, resource, thr = solution.evaluate()
        reward = thr     # constrained objective reported at lam = 0
    rows = _dp_rollout(env, solution, cfg.run["slots"])
    return rows, (reward, thr, resource)


# ---------- learner cells ----------


def _build_agent(cfg, adapter, env, seed):
    algo = cfg.algorithm
    kwargs = {k: algo[k] for k in _AGENT_KEYS if k in algo}
    kwargs.update(obs_dim=adapter.obs_dim, action_dim=adapter.action_dim,
                  action_limit=env.e_max, seed=seed)
    name = algo["name"]
    if name == "td3-like":
        kwargs.setdefault("beta_softmax", 0.0)
        kwargs.setdefault("n_noise", 1)
    elif name == "sd3-like":
        kwargs["recurrent"] = False
    if name != "sd3-like" and "recurrent" in algo:
        kwargs["recurrent"] = bool(algo["recurrent"])
    return Rsd4Agent(AgentConfig(**kwargs))


def make_adapter(cfg, env):
    if cfg.algorithm.get("decompose"):
        return DecomposedAdapter(DecomposedEnv(env))
    return adapt(env)


def _learner_lambda_cell(cfg, env, value, seed, out_dir, tag):
    adapter = make_adapter(cfg, env)
    agent = _build_agent(cfg, adapter, env, seed)
    name = cfg.algorithm["name"]
    curve_path = os.path.join(out_dir, f"{name}_{tag}_s{seed}.csv")
    agent.train(adapter, lam=value, curve_path=curve_path,
                checkpoint_dir=out_dir)
    agent.save(os.path.join(out_dir, f"{name}_{tag}_s{seed}"))
    stats = agent.evaluate(adapter, lam=value)
    reward = stats["reward_per_slot"]
    return curve_path, (reward, stats["throughput_per_slot"],
                        stats["resource_per_slot"])


def _train_inner(cfg, env, seed, out_dir):
    """Inner solver factory for budget mode: train at a multiplier, report
    per-slot spend and throughput.  warm_start reuses the same agent with a
    flushed replay; the default re-initializes networks every iterate."""
    warm = bool(cfg.algorithm.get("warm_start", False))
    adapter = make_adapter(cfg, env)
    box = {"agent": None}

    def inner(lam):
        if box["agent"] is None or not warm:
            box["agent"] = _build_agent(cfg, adapter, env, seed)
        else:
            box["agent"].replay.clear()
        agent = box["agent"]
        agent.train(adapter, lam=lam, checkpoint_dir=out_dir)
        stats = agent.evaluate(adapter, lam=lam)
        sol = dual_mod.InnerSolution(policy=agent,
                                     resource=stats["resource_per_slot"],
                                     throughput=stats["throughput_per_slot"])
        sol.stats = stats
        return sol

    return inner, adapter


def _learner_budget_cell(cfg, env, value, seed, out_dir, tag):
    name = cfg.algorithm["name"]
    inner, adapter = _train_inner(cfg, env, seed, out_dir)
    dual_csv = os.path.join(out_dir, f"{name}_{tag}_s{seed}_dual.csv")
    result = dual_mod.solve_constrained(
        inner, float(value), lam0=cfg.dual["lambda0"],
        alpha0=cfg.dual["alpha0"], delta=cfg.dual["delta"],
        max_iters=cfg.dual["max_iters"], csv_path=dual_csv)
    agent = result.policy
    agent.save(os.path.join(out_dir, f"{name}_{tag}_s{seed}"))
    thr, spend = result.record.throughput, result.record.resource
    return dual_csv, (thr, thr, spend)


def _vector_dual_cell(cfg, env, budgets, seed, out_dir, tag):
    """Per-node dual ascent for multihop budgets: each node's multiplier
    takes its own projected step; the shared step size halves when the
    summed multiplier path turns; stops when every step is within delta."""
    name = cfg.algorithm["name"]
    nodes = sorted(budgets)
    for node in nodes:
        if node not in env.service_nodes:
            raise ConfigError(f"budget given for non-serving node {node}")
    inner, adapter = _train_inner(cfg, env, seed, out_dir)
    lam = {n: float(cfg.dual["lambda0"]) for n in nodes}
    alpha = float(cfg.dual["alpha0"])
    delta, max_iters = cfg.dual["delta"], cfg.dual["max_iters"]
    trail = [sum(lam.values())]
    history, solutions = [], []
    for k in range(max_iters):
        sol = inner(dict(lam))
        spend = sol.stats["resource_per_node_per_slot"]
        history.append((k, dict(lam), alpha,
                        {n: spend.get(n, 0.0) for n in nodes}, sol.throughput))
        solutions.append(sol)
        moved = 0.0
        for n in nodes:
            new = dual_mod.dual_update(lam[n], alpha, spend.get(n, 0.0),
                                       float(budgets[n]))
            moved = max(moved, abs(new - lam[n]))
            lam[n] = new
        trail.append(sum(lam.values()))
        if len(trail) >= 3 and not dual_mod._monotone(*trail[-3:]):
            alpha *= 0.5
        if moved <= delta:
            break
    csv_path = os.path.join(out_dir, f"{name}_{tag}_s{seed}_dual.csv")
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k"] + [f"lambda_{n}" for n in nodes]
                   + [f"resource_{n}" for n in nodes] + ["alpha", "throughput"])
        for k, lam_k, alpha_k, spend_k, thr_k in history:
            w.writerow([k] + [_fmt(lam_k[n]) for n in nodes]
                       + [_fmt(spend_k[n]) for n in nodes]
                       + [_fmt(alpha_k), _fmt(thr_k)])
    feasible = [i for i, (_, _, _, spend_k, _) in enumerate(history)
                if all(spend_k[n] <= float(budgets[n]) * (1 + 1e-9) + 1e-12
                       for n in nodes)]
    if feasible:
        best = max(feasible, key=lambda i: history[i][4])
    else:
        best = int(np.argmin([sum(max(0.0, h[3][n] - float(budgets[n]))
                                  for n in nodes) for h in history]))
    agent = solutions[best].policy
    agent.save(os.path.join(out_dir, f"{name}_{tag}_s{seed}"))
    thr = history[best][4]
    spend_total = sum(history[best][3].values())
    return csv_path, (thr, thr, spend_total)


# ---------- rollout-only (checkpointed) learner ----------


def _checkpoint_rollout(cfg, env, value, seed, out_dir, tag):
    path = cfg.algorithm["checkpoint"]
    try:
        agent, _ = Rsd4Agent.restore(path)
    except FileNotFoundError:
        raise ConfigError(f"missing checkpoint file {path}") from None
    adapter = make_adapter(cfg, env)
    if (adapter.obs_dim, adapter.action_dim) != \
            (agent.cfg.obs_dim, agent.cfg.action_dim):
        raise ConfigError(
            f"checkpoint {path} was trained for dims "
            f"({agent.cfg.obs_dim}, {agent.cfg.action_dim}), environment has "
            f"({adapter.obs_dim}, {adapter.action_dim})")
    lam = value if cfg.mode == "lambdas" else 0.0
    slots = cfg.run["slots"]
    T = agent.cfg.episode_length
    rows = []
    t = 0
    eval_env = adapter.fork(seed)
    while t < slots:
        obs = eval_env.reset()
        agent.reset_episode(eval_env.n_contexts)
        for _ in range(min(T, slots - t)):
            action = agent.act(obs, explore=False)
            obs, rewards, outcome = eval_env.step(action, lam=lam)
            rows.append((t, outcome.throughput, outcome.resource,
                         float(np.sum(rewards))))
            t += 1
    return rows


# ---------- cell dispatch ----------


def run_cell(cfg, value_index, value, seed, out_dir):
    """Execute one (sweep value, seed) cell; returns its summary row."""
    name = cfg.algorithm["name"]
    tag = _cell_tag(cfg.mode, value, value_index)
    env = build_environment(cfg.environment, seed)
    series_file = None
    if name in HEURISTICS:
        rows = _heuristic_cell(cfg, env, name, float(value), cfg.run["slots"])
        series_file = os.path.join(out_dir, f"{name}_{tag}_s{seed}.csv")
        _write_series(series_file, rows)
        thr, res, rew = _series_means(rows)
        metrics = (rew, thr, res)
    elif name == "dp":
        rows, metrics = _dp_cell(cfg, env, value, seed, out_dir, tag)
        series_file = os.path.join(out_dir, f"dp_{tag}_s{seed}.csv")
        _write_series(series_file, rows)
    elif cfg.algorithm.get("checkpoint"):
        rows = _checkpoint_rollout(cfg, env, value, seed, out_dir, tag)
        series_file = os.path.join(out_dir, f"{name}_{tag}_s{seed}.csv")
        _write_series(series_file, rows)
        thr, res, rew = _series_means(rows)
        metrics = (rew, thr, res)
    elif cfg.mode == "lambdas":
        series_file, metrics = _learner_lambda_cell(cfg, env, value, seed,
                                                    out_dir, tag)
    elif isinstance(value, dict):
        series_file, metrics = _vector_dual_cell(cfg, env, value, seed,
                                                 out_dir, tag)
    else:
        series_file, metrics = _learner_budget_cell(cfg, env, value, seed,
                                                    out_dir, tag)
    reward, throughput, resource = metrics
    return {
        "algorithm": name,
        "cell": _cell_label(value),
        "cell_index": value_index,
        "seed": seed,
        "reward": float(reward),
        "throughput": float(throughput),
        "resource": float(resource),
        "series_file": os.path.basename(series_file),
    }


def _cell_worker(payload):
    data, source, value_index, value, seed, out_dir = payload
    cfg = config_from_dict(data, source=source)
    return run_cell(cfg, value_index, value, seed, out_dir)


def run_experiment(config, out_dir=None, workers=None):
    """Run every (sweep value, seed) cell of a config; returns summary rows.

    Writes per-cell series/curve CSVs, cells.csv (one row per cell) and
    summary.csv (mean/std over seeds, population convention).
    """
    if isinstance(config, (str, os.PathLike)):
        cfg = load_config(config)
    elif isinstance(config, dict):
        cfg = config_from_dict(config)
    else:
        cfg = config
    out_dir = out_dir or cfg.run["out"]
    os.makedirs(out_dir, exist_ok=True)
    tasks = [(vi, value, seed)
             for vi, value in enumerate(cfg.cells)
             for seed in cfg.run["seeds"]]
    n_workers = worker_count(workers)
    if n_workers > 1 and len(tasks) > 1:
        payloads = [(cfg.as_dict(), cfg.source, vi, value, seed, out_dir)
                    for vi, value, seed in tasks]
        with futures.ProcessPoolExecutor(max_workers=n_workers) as pool:
            rows = list(pool.map(_cell_worker, payloads))
    else:
        rows = [run_cell(cfg, vi, value, seed, out_dir)
                for vi, value, seed in tasks]
    rows.sort(key=lambda r: (r["cell_index"], r["seed"]))

    with open(os.path.join(out_dir, "cells.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["algorithm", "cell", "seed", "reward", "throughput",
                    "resource", "series_file"])
        for r in rows:
            w.writerow([r["algorithm"], r["cell"], r["seed"], _fmt(r["reward"]),
                        _fmt(r["throughput"]), _fmt(r["resource"]),
                        r["series_file"]])

    with open(os.path.join(out_dir, "summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["algorithm", "cell", "seeds",
                    "reward_mean", "reward_std", "throughput_mean",
                    "throughput_std", "resource_mean", "resource_std"])
        for vi, value in enumerate(cfg.cells):
            group = [r for r in rows if r["cell_index"] == vi]
            cols = {key: np.asarray([r[key] for r in group], dtype=float)
                    for key in ("reward", "throughput", "resource")}
            w.writerow([cfg.algorithm["name"], _cell_label(value), len(group)]
                       + [_fmt(v) for pair in
                          ((cols[k].mean(), cols[k].std()) for k in
                           ("reward", "throughput", "resource"))
                          for v in pair])
    return rows
