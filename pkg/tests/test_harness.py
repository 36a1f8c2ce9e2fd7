"""Experiment driver and CLI: config contract, cells, CSV layout, exit codes."""

import csv
import os

import numpy as np
import pytest
import yaml

from schedlab import (
    ConfigError,
    MarkovChannel,
    MultiHopEnv,
    SingleHopEnv,
    TraceArrivals,
    TraceChannel,
    cli,
    harness,
    write_trace,
)

GAIN_03 = 0.155927828304   # exact-solver gain of the tiny preset at lam=0.3


def base_config(**over):
    cfg = {
        "environment": {
            "kind": "single-hop", "e_max": 1.0,
            "users": [{"deadline": 2,
                       "arrivals": {"kind": "bernoulli", "p": 0.5},
                       "channel": {"kind": "markov", "levels": [1.0, 2.0],
                                   "mean": 1.5, "persistence": 0.5}}],
        },
        "algorithm": {"name": "edf"},
        "dual": {"budgets": [0.4]},
        "run": {"seeds": [0], "slots": 50, "out": "results"},
    }
    cfg.update(over)
    return cfg


def micro_learner_algo(name="rsd4", **extra):
    algo = {"name": name, "hidden_fc": 4, "hidden_lstm": 4, "hidden_merge": 4,
            "n_noise": 2, "batch_size": 1, "episode_length": 4, "episodes": 2,
            "warmup_episodes": 1, "eval_every": 2, "eval_episodes": 1}
    algo.update(extra)
    return algo


# ---------- config contract ----------


def test_missing_section_rejected():
    cfg = base_config()
    del cfg["run"]
    with pytest.raises(ConfigError, match="run"):
        harness.config_from_dict(cfg)


def test_unknown_section_rejected():
    with pytest.raises(ConfigError, match="extras"):
        harness.config_from_dict(base_config(extras={}))


def test_unknown_algorithm_rejected():
    with pytest.raises(ConfigError, match="algorithm.name"):
        harness.config_from_dict(base_config(algorithm={"name": "ppo"}))


def test_unknown_algorithm_key_rejected():
    algo = {"name": "rsd4", "learning_rate": 0.1}
    with pytest.raises(ConfigError, match="learning_rate"):
        harness.config_from_dict(base_config(algorithm=algo,
                                             dual={"lambdas": [0.1]}))


def test_seed_list_required():
    with pytest.raises(ConfigError, match="seeds"):
        harness.config_from_dict(base_config(run={"seeds": []}))
    with pytest.raises(ConfigError, match="seeds"):
        harness.config_from_dict(base_config(run={"seeds": [0.5]}))


def test_lambdas_and_budgets_exclusive():
    with pytest.raises(ConfigError, match="exclusive"):
        harness.config_from_dict(base_config(
            algorithm={"name": "rsd4"},
            dual={"lambdas": [0.1], "budgets": [1.0]}))


def test_heuristics_need_budget_mode():
    with pytest.raises(ConfigError, match="budget"):
        harness.config_from_dict(base_config(dual={"lambdas": [0.1]}))
    with pytest.raises(ConfigError, match="budgets"):
        harness.config_from_dict(base_config(dual={}))


def test_negative_multiplier_rejected():
    with pytest.raises(ConfigError, match="lambdas"):
        harness.config_from_dict(base_config(algorithm={"name": "rsd4"},
                                             dual={"lambdas": [-0.1]}))


def test_multihop_rejects_heuristics_and_decompose():
    env = {"kind": "multihop",
           "flows": [{"path": [1, 2], "deadline": 1}]}
    with pytest.raises(ConfigError, match="single-hop baseline"):
        harness.config_from_dict(base_config(environment=env))
    with pytest.raises(ConfigError, match="decompos"):
        harness.config_from_dict(base_config(
            environment=env,
            algorithm={"name": "rsd4", "decompose": True},
            dual={"lambdas": [0.1]}))


def test_defaults_fill_in():
    cfg = harness.config_from_dict({
        "environment": base_config()["environment"],
        "algorithm": {"name": "rsd4"},
        "run": {"seeds": [3]},
    })
    assert cfg.run["slots"] == 5000 and cfg.run["out"] == "results"
    assert cfg.mode == "lambdas" and cfg.cells == [0.0]
    assert cfg.dual == {"lambda0": 0.0, "alpha0": 0.1, "delta": 1e-4,
                        "max_iters": 40}


def test_load_config_roundtrip(tmp_path):
    path = tmp_path / "exp.yaml"
    path.write_text(yaml.safe_dump(base_config()))
    cfg = harness.load_config(path)
    assert cfg.mode == "budgets" and cfg.cells == [0.4]
    assert cfg.source == str(path)


def test_load_config_missing_file():
    with pytest.raises(ConfigError, match="not found"):
        harness.load_config("/nonexistent/exp.yaml")


def test_load_config_bad_yaml(tmp_path):
    path = tmp_path / "exp.yaml"
    path.write_text("environment: [unclosed")
    with pytest.raises(ConfigError, match="YAML"):
        harness.load_config(path)


# ---------- environment construction ----------


def test_build_single_hop_from_section():
    env = harness.build_environment(base_config()["environment"], seed=0)
    assert isinstance(env, SingleHopEnv)
    assert env.n_users == 1 and env.users[0].deadline == 2
    assert env.e_max == 1.0


def test_build_requires_users():
    with pytest.raises(ConfigError, match="users"):
        harness.build_environment({"kind": "single-hop"}, seed=0)


def test_build_mask_and_hidden_period():
    section = base_config()["environment"]
    section["mask"] = {"buffers": True, "channels": False, "arrivals": True}
    section["hidden_period"] = 2
    mask = harness.build_mask(section, "environment")
    assert (mask.buffers, mask.arrivals, mask.channels) == (True, True, False)
    assert mask.service_period == 2


def test_build_switch_schedule():
    section = base_config()["environment"]
    section["switches"] = [{"slot": 0},
                           {"slot": 10, "arrival_scale": 0.5,
                            "channel_means": [1.2]}]
    mask = harness.build_mask(section, "environment")
    phase = mask.switches.active(11)
    assert phase.arrival_scale == 0.5 and phase.channel_means == [1.2]
    assert mask.switches.active(9).arrival_scale == 1.0


def test_build_multihop_from_section():
    section = {
        "kind": "multihop", "e_max": 2.0,
        "flows": [{"path": [1, 2, 3], "deadline": 3,
                   "arrivals": {"kind": "bernoulli", "p": 1.0},
                   "channels": [{"kind": "markov", "levels": [1.0, 2.0],
                                 "mean": 1.5, "persistence": 0.5}] * 2}],
    }
    env = harness.build_environment(section, seed=0)
    assert isinstance(env, MultiHopEnv)
    assert env.flows[0].hops == 2 and env.service_nodes == [1, 2]


def test_flow_channel_count_checked():
    section = {"kind": "multihop",
               "flows": [{"path": [1, 2, 3], "deadline": 3,
                          "channels": [{"kind": "markov"}]}]}
    with pytest.raises(ConfigError, match="one channel"):
        harness.build_environment(section, seed=0)


def test_source_kind_errors():
    with pytest.raises(ConfigError, match="arrival kind"):
        harness.build_arrival_source({"kind": "pareto"}, "here")
    with pytest.raises(ConfigError, match="channel kind"):
        harness.build_channel_source({"kind": "rayleigh"}, "here")
    with pytest.raises(ConfigError, match="levels"):
        harness.build_channel_source({"kind": "trace", "path": "x"}, "here")


def test_trace_sources_from_file(tmp_path):
    path = tmp_path / "tr.csv"
    write_trace(path, {1: [2, 0, 1], 2: [0, 1, 0]})
    arr = harness.build_arrival_source({"kind": "trace", "path": str(path),
                                        "user": 1}, "here")
    assert isinstance(arr, TraceArrivals)
    with pytest.raises(ConfigError, match="specify 'user'"):
        harness.build_arrival_source({"kind": "trace", "path": str(path)},
                                     "here")
    with pytest.raises(ConfigError, match="no user 9"):
        harness.build_arrival_source({"kind": "trace", "path": str(path),
                                      "user": 9}, "here")


def test_ingest_trace_reports(tmp_path):
    path = tmp_path / "tr.csv"
    write_trace(path, {1: [2, 0, 1, 1], 2: [0, 1, 0, 1]})
    sources, report = harness.ingest_trace(path, kind="arrivals")
    assert isinstance(sources[1], TraceArrivals)
    assert report[1] == {"mean_rate": 1.0, "slots": 4}
    sources, report = harness.ingest_trace(path, kind="channels",
                                           levels=[1.0, 2.0, 4.0])
    assert isinstance(sources[2], TraceChannel)
    assert report[2]["mean_level"] == pytest.approx((1 + 2 + 1 + 2) / 4)
    with pytest.raises(ConfigError, match="kind"):
        harness.ingest_trace(path, kind="fading")


# ---------- workers, tags ----------


def test_worker_count_resolution(monkeypatch):
    monkeypatch.delenv(harness.WORKERS_VAR, raising=False)
    assert harness.worker_count() == 1
    monkeypatch.setenv(harness.WORKERS_VAR, "3")
    assert harness.worker_count() == 3
    assert harness.worker_count(2) == 2
    with pytest.raises(ConfigError):
        harness.worker_count(0)


def test_cell_tags_and_labels():
    assert harness._cell_tag("lambdas", 0.3, 0) == "lam0.3"
    assert harness._cell_tag("budgets", 10.0, 2) == "e010"
    assert harness._cell_tag("budgets", {1: 1.0}, 2) == "e0set2"
    assert harness._cell_label({2: 30.0, 1: 10.0}) == "{1:10;2:30}"


# ---------- presets ----------


@pytest.mark.parametrize("name", sorted(harness.PRESETS))
def test_presets_validate_and_build(name):
    cfg = harness.config_from_dict(harness.PRESETS[name]())
    env = harness.build_environment(cfg.environment, seed=0)
    obs = env.reset()
    assert np.all(np.isfinite(obs))


def test_fourusers_preset_shape():
    cfg = harness.config_from_dict(harness.fourusers_preset())
    env = harness.build_environment(cfg.environment, seed=0)
    assert env.n_users == 4
    assert [u.deadline for u in env.users] == [6, 6, 1, 1]
    assert [u.arrivals.mean() for u in env.users] == \
        pytest.approx([1.96, 0.91, 2.46, 0.70], rel=1e-3)


def test_multihop_preset_shape():
    cfg = harness.config_from_dict(harness.multihop_preset())
    env = harness.build_environment(cfg.environment, seed=0)
    assert len(env.flows) == 12
    assert env.service_nodes == [1, 2, 3, 4]
    assert set(cfg.cells[0]) == {1, 2, 3, 4}


# ---------- cells and CSV layout ----------


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_static_cell_outputs(tmp_path):
    cfg = base_config(algorithm={"name": "static"},
                      dual={"budgets": [0.4, 0.8]},
                      run={"seeds": [0, 1], "slots": 40,
                           "out": str(tmp_path)})
    rows = harness.run_experiment(cfg)
    assert len(rows) == 4
    cells = read_csv(tmp_path / "cells.csv")
    assert cells[0] == ["algorithm", "cell", "seed", "reward", "throughput",
                        "resource", "series_file"]
    assert [r[1:3] for r in cells[1:]] == \
        [["0.4", "0"], ["0.4", "1"], ["0.8", "0"], ["0.8", "1"]]
    series = read_csv(tmp_path / cells[1][6])
    assert series[0] == ["slot", "throughput", "resource", "reward"]
    assert len(series) == 41
    # budget mode reports the plain throughput as the objective
    assert cells[1][3] == cells[1][4]
    # the fixed plan holds the budget against the expected occupancy
    env = harness.build_environment(cfg["environment"], seed=0)
    plan = harness._static_allocation(env, 0.4)
    expected = [np.array([0.0, 0.5, 0.5])]
    assert sum(p @ b for p, b in zip(plan, expected)) == \
        pytest.approx(0.4, rel=1e-6)
    assert np.all(plan[0] <= 1.0)


def test_summary_aggregates_cells(tmp_path):
    cfg = base_config(dual={"budgets": [0.4]},
                      run={"seeds": [0, 1, 2], "slots": 30,
                           "out": str(tmp_path)})
    rows = harness.run_experiment(cfg)
    summary = read_csv(tmp_path / "summary.csv")
    assert summary[0] == ["algorithm", "cell", "seeds", "reward_mean",
                          "reward_std", "throughput_mean", "throughput_std",
                          "resource_mean", "resource_std"]
    got = summary[1]
    rewards = np.asarray([r["reward"] for r in rows])
    assert got[:3] == ["edf", "0.4", "3"]
    assert float(got[3]) == pytest.approx(rewards.mean(), abs=1e-12)
    assert float(got[4]) == pytest.approx(rewards.std(), abs=1e-12)


def test_rerun_is_byte_identical(tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    for out in (out_a, out_b):
        cfg = base_config(run={"seeds": [0, 1], "slots": 25, "out": str(out)})
        harness.run_experiment(cfg)
    for name in sorted(os.listdir(out_a)):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name


def test_dp_lambda_cell_matches_exact_gain(tmp_path):
    preset = harness.tiny_preset()
    preset["run"].update(slots=50, out=str(tmp_path))
    rows = harness.run_experiment(preset)
    assert rows[0]["reward"] == pytest.approx(GAIN_03, abs=1e-9)
    assert (tmp_path / "dp_lam0.3_s0.csv").exists()


def test_dp_budget_cell_writes_dual_trace(tmp_path):
    preset = harness.tiny_preset()
    preset["dual"] = {"budgets": [0.3], "alpha0": 0.5, "max_iters": 8}
    preset["run"].update(slots=30, out=str(tmp_path))
    rows = harness.run_experiment(preset)
    trace = read_csv(tmp_path / "dp_e00.3_s0_dual.csv")
    assert trace[0] == ["k", "lambda", "alpha", "resource", "throughput"]
    assert len(trace) >= 2
    # constrained runs respect the budget at the recommended multiplier
    assert rows[0]["resource"] <= 0.3 * 1.02 + 1e-9


def test_learner_lambda_cell_files(tmp_path):
    cfg = base_config(algorithm=micro_learner_algo(),
                      dual={"lambdas": [0.2]},
                      run={"seeds": [0], "slots": 8, "out": str(tmp_path)})
    rows = harness.run_experiment(cfg)
    assert rows[0]["series_file"] == "rsd4_lam0.2_s0.csv"
    assert (tmp_path / "rsd4_lam0.2_s0.csv").exists()
    assert (tmp_path / "rsd4_lam0.2_s0.npz").exists()
    curve = read_csv(tmp_path / "rsd4_lam0.2_s0.csv")
    assert curve[0] == ["episode", "reward", "resource", "throughput"]


def test_learner_budget_cell_files(tmp_path):
    cfg = base_config(algorithm=micro_learner_algo(),
                      dual={"budgets": [0.5], "max_iters": 2},
                      run={"seeds": [0], "slots": 8, "out": str(tmp_path)})
    rows = harness.run_experiment(cfg)
    assert rows[0]["series_file"] == "rsd4_e00.5_s0_dual.csv"
    trace = read_csv(tmp_path / "rsd4_e00.5_s0_dual.csv")
    assert trace[0] == ["k", "lambda", "alpha", "resource", "throughput"]


def test_checkpoint_rollout_cell(tmp_path):
    train_dir = tmp_path / "fit"
    cfg = base_config(algorithm=micro_learner_algo(),
                      dual={"lambdas": [0.2]},
                      run={"seeds": [0], "slots": 8, "out": str(train_dir)})
    harness.run_experiment(cfg)
    roll = base_config(
        algorithm={"name": "rsd4",
                   "checkpoint": str(train_dir / "rsd4_lam0.2_s0.npz")},
        dual={"lambdas": [0.2]},
        run={"seeds": [0], "slots": 10, "out": str(tmp_path / "roll")})
    rows = harness.run_experiment(roll)
    series = read_csv(tmp_path / "roll" / "rsd4_lam0.2_s0.csv")
    assert len(series) == 11
    assert rows[0]["reward"] == pytest.approx(
        rows[0]["throughput"] - 0.2 * rows[0]["resource"], abs=1e-9)


def test_checkpoint_dim_mismatch(tmp_path):
    train_dir = tmp_path / "fit"
    cfg = base_config(algorithm=micro_learner_algo(),
                      dual={"lambdas": [0.2]},
                      run={"seeds": [0], "slots": 8, "out": str(train_dir)})
    harness.run_experiment(cfg)
    wide = base_config()["environment"]
    wide["users"] = wide["users"] * 2
    wide["users"][1] = dict(wide["users"][1], deadline=1)
    roll = base_config(
        environment=wide,
        algorithm={"name": "rsd4",
                   "checkpoint": str(train_dir / "rsd4_lam0.2_s0.npz")},
        dual={"lambdas": [0.2]},
        run={"seeds": [0], "slots": 4, "out": str(tmp_path / "roll")})
    with pytest.raises(ConfigError, match="dims"):
        harness.run_experiment(roll)


def test_worker_pool_matches_serial(tmp_path):
    out_a, out_b = tmp_path / "serial", tmp_path / "pool"
    for out, workers in ((out_a, 1), (out_b, 2)):
        cfg = base_config(dual={"budgets": [0.4]},
                          run={"seeds": [0, 1], "slots": 20, "out": str(out)})
        harness.run_experiment(cfg, workers=workers)
    for name in sorted(os.listdir(out_a)):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name


# ---------- CLI ----------


def write_config(tmp_path, cfg):
    path = tmp_path / "exp.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return str(path)


def test_cli_simulate_heuristic(tmp_path, capsys):
    path = write_config(tmp_path, base_config(
        run={"seeds": [0], "slots": 20, "out": str(tmp_path / "out")}))
    assert cli.main(["simulate", "--config", path]) == 0
    out = capsys.readouterr().out
    assert "edf cell=0.4 seed=0" in out


def test_cli_seed_and_out_overrides(tmp_path):
    path = write_config(tmp_path, base_config(
        run={"seeds": [0, 1, 2], "slots": 10, "out": str(tmp_path / "a")}))
    out_dir = tmp_path / "b"
    assert cli.main(["simulate", "--config", path, "--seed", "7",
                     "--out", str(out_dir)]) == 0
    cells = read_csv(out_dir / "cells.csv")
    assert len(cells) == 2 and cells[1][2] == "7"
    assert not (tmp_path / "a").exists()


def test_cli_simulate_refuses_untrained_learner(tmp_path, capsys):
    path = write_config(tmp_path, base_config(
        algorithm={"name": "rsd4"}, dual={"lambdas": [0.1]},
        run={"seeds": [0], "slots": 10, "out": str(tmp_path / "out")}))
    assert cli.main(["simulate", "--config", path]) == 2
    assert "checkpoint" in capsys.readouterr().err


def test_cli_train_and_evaluate(tmp_path, capsys):
    out_dir = tmp_path / "out"
    path = write_config(tmp_path, base_config(
        algorithm=micro_learner_algo(), dual={"lambdas": [0.2]},
        run={"seeds": [0], "slots": 8, "out": str(out_dir)}))
    assert cli.main(["train", "--config", path]) == 0
    capsys.readouterr()
    ckpt = str(out_dir / "rsd4_lam0.2_s0.npz")
    assert cli.main(["evaluate", "--config", path,
                     "--checkpoint", ckpt]) == 0
    assert "reward/slot=" in capsys.readouterr().out
    rows = read_csv(out_dir / "evaluate.csv")
    assert rows[0] == ["seed", "reward", "throughput", "resource"]
    assert len(rows) == 2


def test_cli_train_rejects_heuristic(tmp_path, capsys):
    path = write_config(tmp_path, base_config(
        run={"seeds": [0], "slots": 10, "out": str(tmp_path / "out")}))
    assert cli.main(["train", "--config", path]) == 2
    assert "learner" in capsys.readouterr().err


def test_cli_dual_requires_budgets(tmp_path, capsys):
    path = write_config(tmp_path, base_config(
        algorithm={"name": "rsd4"}, dual={"lambdas": [0.1]},
        run={"seeds": [0], "slots": 10, "out": str(tmp_path / "out")}))
    assert cli.main(["dual", "--config", path]) == 2
    assert "budgets" in capsys.readouterr().err


def test_cli_evaluate_needs_checkpoint(tmp_path, capsys):
    path = write_config(tmp_path, base_config(
        algorithm={"name": "rsd4"}, dual={"lambdas": [0.1]},
        run={"seeds": [0], "slots": 10, "out": str(tmp_path / "out")}))
    assert cli.main(["evaluate", "--config", path]) == 2


def test_cli_dp_oracle_prints_gain(tmp_path, capsys):
    preset = harness.tiny_preset()
    preset["run"].update(out=str(tmp_path / "out"))
    path = write_config(tmp_path, preset)
    assert cli.main(["dp-oracle", "--config", path]) == 0
    out = capsys.readouterr().out
    assert f"gain={GAIN_03:.12g}" in out
    assert "states=4 actions=2" in out
    assert (tmp_path / "out" / "dp_lam0.3_policy.csv").exists()
    assert (tmp_path / "out" / "dp_lam0.3_value.csv").exists()


def test_cli_divergence_exit_code(tmp_path, capsys):
    algo = micro_learner_algo(param_norm_limit=1e-12)
    path = write_config(tmp_path, base_config(
        algorithm=algo, dual={"lambdas": [0.2]},
        run={"seeds": [0], "slots": 8, "out": str(tmp_path / "out")}))
    assert cli.main(["train", "--config", path]) == 3
    assert "diverged" in capsys.readouterr().err


def test_cli_missing_config(capsys):
    assert cli.main(["simulate", "--config", "/nope.yaml"]) == 2
    assert "not found" in capsys.readouterr().err


def test_cli_presets_listing(tmp_path, capsys):
    assert cli.main(["presets"]) == 0
    out = capsys.readouterr().out
    for name in harness.PRESETS:
        assert name in out
    assert cli.main(["presets", "tiny", "--out", str(tmp_path)]) == 0
    emitted = yaml.safe_load((tmp_path / "tiny.yaml").read_text())
    assert emitted == harness.tiny_preset()
    assert cli.main(["presets", "nope"]) == 2
