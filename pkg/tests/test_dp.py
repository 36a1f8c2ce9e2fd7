"""Exact average-reward solver: MDP construction, iteration, enumeration."""

import numpy as np
import pytest

from schedlab import (
    ConfigError,
    DpConfig,
    StateCapError,
    TraceArrivals,
    UserSpec,
    build_mdp,
    dp_optimal,
    enumerate_policies,
    policy_gain,
    relative_value_iteration,
    success_probability,
)

from conftest import make_user, tiny_env

TINY_GRID = DpConfig(grid=(0.0, 1.0))

# frozen from two independent solve paths (value iteration and full policy
# enumeration agree to 1e-9 on this instance)
TINY_GAIN_AT_03 = 0.155927828304


def tiny_mdp():
    env = tiny_env()
    return build_mdp(env.users, env.e_max, TINY_GRID)


def test_state_and_action_enumeration():
    mdp = tiny_mdp()
    assert mdp.n_states == 4   # buffer {0,1} x channel {0,1}
    assert mdp.n_actions == 2  # grid {0, 1} on one bucket
    assert sorted(mdp.states) == [(((0,),), (0,)), (((0,),), (1,)),
                                  (((1,),), (0,)), (((1,),), (1,))]
    for P in mdp.transitions:
        np.testing.assert_allclose(np.asarray(P.sum(axis=1)).ravel(), 1.0,
                                   atol=1e-12)


def test_reward_entries_hand_computed():
    mdp = tiny_mdp()
    s = mdp.states.index((((1,),), (1,)))  # one job, channel level 2.0
    a = mdp.actions.index(((1.0,),))
    p = success_probability(1.0, 2.0)
    assert mdp.throughput[s, a] == pytest.approx(p, abs=1e-12)
    assert mdp.cost[s, a] == 1.0
    zero = mdp.actions.index(((0.0,),))
    assert mdp.throughput[s, zero] == 0.0
    assert mdp.cost[s, zero] == 0.0
    lam = 0.25
    np.testing.assert_allclose(mdp.rewards(lam), mdp.throughput - lam * mdp.cost)


def test_transition_law_hand_computed():
    mdp = tiny_mdp()
    # serving the one job cannot change where arrivals land: next buffer is
    # Bernoulli(0.5) regardless, channel persistence mixes half with the
    # stationary half/half law
    s = mdp.states.index((((1,),), (0,)))
    a = mdp.actions.index(((1.0,),))
    row = mdp.transitions[a][s].toarray().ravel()
    expected = np.zeros(4)
    for nb, pb in ((0, 0.5), (1, 0.5)):
        for nc, pc in ((0, 0.75), (1, 0.25)):
            expected[mdp.states.index((((nb,),), (nc,)))] = pb * pc
    np.testing.assert_allclose(row, expected, atol=1e-12)


def test_value_iteration_matches_enumeration():
    mdp = tiny_mdp()
    lam = 0.3
    gain, bias, policy = relative_value_iteration(mdp, lam, TINY_GRID)
    brute_gain, brute_policy = enumerate_policies(mdp, lam)
    assert gain == pytest.approx(brute_gain, abs=1e-9)
    assert gain == pytest.approx(TINY_GAIN_AT_03, abs=1e-9)
    np.testing.assert_array_equal(policy, brute_policy)
    assert policy_gain(mdp, policy, lam) == pytest.approx(gain, abs=1e-9)


def test_gain_invariant_to_lazy_factor():
    mdp = tiny_mdp()
    gains = [relative_value_iteration(mdp, 0.3, DpConfig(grid=(0.0, 1.0),
                                                         lazy=k))[0]
             for k in (0.5, 0.9, 1.0)]
    assert max(gains) - min(gains) < 1e-8


def test_solution_evaluate_consistent_with_gain():
    env = tiny_env()
    sol = dp_optimal(env.users, env.e_max, lam=0.3, config=TINY_GRID)
    reward, resource, throughput = sol.evaluate()
    assert reward == pytest.approx(sol.gain, abs=1e-9)
    assert reward == pytest.approx(throughput - 0.3 * resource, abs=1e-12)
    pi = sol.stationary_distribution()
    assert pi.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(pi >= 0)


def test_solution_act_looks_up_states():
    env = tiny_env()
    sol = dp_optimal(env.users, env.e_max, lam=0.3, config=TINY_GRID)
    alloc = sol.act(bufs=[(1,)], chans=(0,))
    assert alloc[0].shape == (2,)
    assert alloc[0][0] == 0.0          # bucket 0 never allocated
    assert alloc[0][1] == 1.0          # cheap multiplier: serve the job
    idle = sol.act(bufs=[(0,)], chans=(0,))
    assert idle[0][1] == 0.0           # nothing to serve


def test_higher_multiplier_never_increases_spending():
    env = tiny_env()
    mdp = build_mdp(env.users, env.e_max, TINY_GRID)
    spends = []
    for lam in (0.0, 0.3, 0.8, 2.0):
        sol = dp_optimal(env.users, env.e_max, lam, config=TINY_GRID, mdp=mdp)
        spends.append(sol.evaluate()[1])
    assert all(a >= b - 1e-12 for a, b in zip(spends, spends[1:]))
    assert spends[-1] == pytest.approx(0.0, abs=1e-9)


def test_dump_csv(tmp_path):
    env = tiny_env()
    sol = dp_optimal(env.users, env.e_max, lam=0.3, config=TINY_GRID)
    ppath, vpath = tmp_path / "policy.csv", tmp_path / "value.csv"
    sol.dump_csv(ppath, vpath)
    lines = ppath.read_text().splitlines()
    assert lines[0] == "state,action"
    assert len(lines) == 1 + sol.mdp.n_states
    assert vpath.read_text().splitlines()[0] == "state,bias"


def test_caps_refuse_large_instances():
    env = tiny_env()
    with pytest.raises(StateCapError):
        build_mdp(env.users, env.e_max, DpConfig(grid=(0.0, 1.0), state_cap=2))
    with pytest.raises(StateCapError):
        build_mdp(env.users, env.e_max, DpConfig(grid=(0.0, 0.5, 1.0),
                                                 action_cap=2))


def test_trace_sources_refused():
    user = UserSpec(index=1, deadline=1, weight=1.0, distance=1.0,
                    arrivals=TraceArrivals([1, 0]),
                    channel=make_user().channel)
    with pytest.raises(ConfigError):
        build_mdp([user], 1.0, TINY_GRID)


def test_grid_outside_range_refused():
    env = tiny_env()
    with pytest.raises(ConfigError):
        build_mdp(env.users, env.e_max, DpConfig(grid=(0.0, 2.0)))


def test_default_grid_spacing():
    env = tiny_env()
    mdp = build_mdp(env.users, env.e_max, DpConfig(grid_levels=3))
    assert mdp.grid == (0.0, 0.5, 1.0)


def test_two_user_gain_decomposes():
    # separable instance: joint gain equals the sum of per-user gains
    u1 = make_user(index=1, p=0.5)
    u2 = make_user(index=2, p=0.3, levels=(1.0, 2.0), mean=1.25)
    lam = 0.4
    joint = dp_optimal([u1, u2], 1.0, lam, config=TINY_GRID)
    g1 = dp_optimal([make_user(index=1, p=0.5)], 1.0, lam,
                    config=TINY_GRID).gain
    g2 = dp_optimal([make_user(index=1, p=0.3, levels=(1.0, 2.0), mean=1.25)],
                    1.0, lam, config=TINY_GRID).gain
    assert joint.gain == pytest.approx(g1 + g2, abs=1e-7)
