"""Exact average-reward solve of tiny single-hop instances.

The decision-time state is (per-user bucket counts for remaining times
1..tau_i, per-user channel level index); bucket counts are bounded by the
arrival support because all of a user's jobs age together (each bucket holds
one arrival cohort).  Actions assign one grid level to every servable bucket.
The transition law mirrors the environment's event order exactly: binomial
service successes leave, survivors shift down (remaining-time-1 jobs leave
either way), fresh arrivals enter at tau_i, channels step their chain.

The solver is relative value iteration on the lazy transformation
P' = (1-kappa) I + kappa P, which leaves the gain, the stationary laws, and
the greedy policies untouched while guaranteeing convergence on periodic
chains.  Iteration stops when the span of the Bellman residual is below
``tol``; the gain estimate is then pinned within tol/2.

``enumerate_policies`` is the brute-force companion: it walks every
stationary deterministic policy and computes its gain from the bias/gain
linear system, which is an independent solve path over the same exact MDP.

Requirements on the instance: synthetic arrival sources exposing ``pmf()``
and channel sources exposing ``transition_matrix()``/``stationary()``
(trace sources are refused), and a small enough state/action space; the
build refuses with a size report beyond the configured caps.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, StateCapError
from .service import success_probability

__all__ = ["DpConfig", "TinyMdp", "build_mdp", "relative_value_iteration",
           "DpSolution", "dp_optimal", "enumerate_policies", "policy_gain"]


@dataclass
class DpConfig:
    grid: tuple | None = None    # allocation levels; default evenly spaced
    grid_levels: int = 5
    state_cap: int = 100_000
    action_cap: int = 4_096
    lazy: float = 0.9
    tol: float = 1e-9
    max_iters: int = 500_000

    def __post_init__(self):
        if not (0.0 < self.lazy <= 1.0):
            raise ConfigError("lazy factor must be in (0, 1]")
        if self.tol <= 0:
            raise ConfigError("tol must be > 0")


def _binom_pmf(n, p):
    if n == 0:
        return {0: 1.0}
    return {k: math.comb(n, k) * p**k * (1 - p) ** (n - k) for k in range(n + 1)}


@dataclass
class TinyMdp:
    """Exact finite MDP with reward split into throughput and resource parts."""

    states: list          # (bufs, chans): bufs = per-user tuple of counts (tau..1 by index 1..tau)
    actions: list         # per-user tuple of per-bucket grid assignments
    throughput: np.ndarray  # [S, A] expected weighted successes
    cost: np.ndarray        # [S, A] charged resource
    transitions: list       # per action: csr_matrix [S, S]
    users: list
    grid: tuple

    @property
    def n_states(self):
        return len(self.states)

    @property
    def n_actions(self):
        return len(self.actions)

    def rewards(self, lam):
        return self.throughput - lam * self.cost

    def action_allocation(self, action_idx):
        """Full per-user allocation vectors (bucket 0 included) for an action."""
        action = self.actions[action_idx]
        return [np.concatenate([[0.0], np.asarray(per_user, dtype=float)])
                for per_user in action]


def build_mdp(users, e_max, config=None, success_model=None):
    """Enumerate the exact MDP of a tiny fully observed single-hop instance."""
    config = config or DpConfig()
    model = success_model if success_model is not None else success_probability
    grid = tuple(config.grid) if config.grid is not None \
        else tuple(np.linspace(0.0, e_max, config.grid_levels))
    if any(g < 0 or g > e_max for g in grid):
        raise ConfigError(f"grid levels must lie in [0, {e_max}]")

    arrival_pmfs, channel_levels, channel_T = [], [], []
    for u in users:
        if not hasattr(u.arrivals, "pmf"):
            raise ConfigError(f"user {u.index}: exact solve needs a pmf-capable "
                              "arrival source (traces are refused)")
        if not hasattr(u.channel, "transition_matrix"):
            raise ConfigError(f"user {u.index}: exact solve needs a Markov channel")
        arrival_pmfs.append(u.arrivals.pmf())
        channel_levels.append(np.asarray(u.channel.levels, dtype=float))
        channel_T.append(u.channel.transition_matrix())

    # state space: per-user bucket counts bounded by the arrival support
    per_user_bufs = []
    for u, pmf in zip(users, arrival_pmfs):
        a_max = max(pmf)
        per_user_bufs.append([tuple(b) for b in
                              itertools.product(range(a_max + 1), repeat=u.deadline)])
    per_user_chan = [range(len(lv)) for lv in channel_levels]
    n_states = int(np.prod([len(b) for b in per_user_bufs])
                   * np.prod([len(lv) for lv in channel_levels]))
    n_actions = int(len(grid) ** sum(u.deadline for u in users))
    if n_states > config.state_cap:
        raise StateCapError(f"{n_states} states exceed the cap {config.state_cap}")
    if n_actions > config.action_cap:
        raise StateCapError(f"{n_actions} actions exceed the cap {config.action_cap}")

    states = [(bufs, chans) for bufs in itertools.product(*per_user_bufs)
              for chans in itertools.product(*per_user_chan)]
    index = {s: k for k, s in enumerate(states)}
    per_user_actions = [list(itertools.product(grid, repeat=u.deadline)) for u in users]
    actions = list(itertools.product(*per_user_actions))

    S, A = len(states), len(actions)
    throughput = np.zeros((S, A))
    cost = np.zeros((S, A))
    rows = [[] for _ in range(A)]
    cols = [[] for _ in range(A)]
    vals = [[] for _ in range(A)]

    for s_idx, (bufs, chans) in enumerate(states):
        for a_idx, action in enumerate(actions):
            thr = 0.0
            spend = 0.0
            # per user: distribution over survivor tuples (pre-arrival, shifted)
            user_branches = []
            for i, u in enumerate(users):
                b = bufs[i]                       # b[tau-1] = count at remaining tau
                e = action[i]
                c_val = channel_levels[i][chans[i]]
                probs = [float(model(e[tau - 1], c_val, u.distance))
                         for tau in range(1, u.deadline + 1)]
                thr += u.weight * sum(bt * pt for bt, pt in zip(b, probs))
                spend += sum(et * bt for et, bt in zip(e, b))
                # survivors of buckets tau >= 2 land at tau-1; bucket tau_i refills
                branch = {(): 1.0}
                for tau in range(2, u.deadline + 1):
                    nxt = {}
                    for prefix, pr in branch.items():
                        for k, pk in _binom_pmf(b[tau - 1], probs[tau - 1]).items():
                            nxt[prefix + (b[tau - 1] - k,)] = nxt.get(
                                prefix + (b[tau - 1] - k,), 0.0) + pr * pk
                    branch = nxt
                with_arrivals = {}
                for prefix, pr in branch.items():
                    for a_new, pa in arrival_pmfs[i].items():
                        tup = prefix + (a_new,)
                        with_arrivals[tup] = with_arrivals.get(tup, 0.0) + pr * pa
                user_branches.append(with_arrivals)
            throughput[s_idx, a_idx] = thr
            cost[s_idx, a_idx] = spend
            # product across users, then channels
            for combo in itertools.product(*[ub.items() for ub in user_branches]):
                next_bufs = tuple(t for t, _ in combo)
                p_bufs = math.prod(p for _, p in combo)
                if p_bufs == 0.0:
                    continue
                for chan_next in itertools.product(*per_user_chan):
                    p = p_bufs
                    for i in range(len(users)):
                        p *= channel_T[i][chans[i], chan_next[i]]
                    if p == 0.0:
                        continue
                    rows[a_idx].append(s_idx)
                    cols[a_idx].append(index[(next_bufs, chan_next)])
                    vals[a_idx].append(p)

    transitions = [sp.csr_matrix((vals[a], (rows[a], cols[a])), shape=(S, S))
                   for a in range(A)]
    for P in transitions:
        np.testing.assert_allclose(np.asarray(P.sum(axis=1)).ravel(), 1.0, atol=1e-12)
    return TinyMdp(states=states, actions=actions, throughput=throughput,
                   cost=cost, transitions=transitions, users=list(users), grid=grid)


def relative_value_iteration(mdp, lam, config=None):
    """RVI on the lazy operator; returns (gain, bias, greedy action indices)."""
    config = config or DpConfig()
    R = mdp.rewards(lam)
    kappa = config.lazy
    S = mdp.n_states
    h = np.zeros(S)
    for _ in range(config.max_iters):
        Q = np.column_stack([R[:, a] + kappa * (mdp.transitions[a] @ h)
                             for a in range(mdp.n_actions)])
        Th = Q.max(axis=1) + (1.0 - kappa) * h
        diff = Th - h
        span = float(diff.max() - diff.min())
        gain = 0.5 * float(diff.max() + diff.min())
        h = Th - Th[0]
        if span <= config.tol:
            policy = Q.argmax(axis=1)
            return gain, h, policy
    raise RuntimeError(f"value iteration did not reach span {config.tol} within "
                       f"{config.max_iters} iterations (last span {span:g})")


def policy_gain(mdp, policy, lam):
    """Gain of one stationary policy from the bias/gain linear system.

    Solves g + h(s) = r(s) + sum_s' P(s'|s) h(s') with h(state 0) = 0;
    valid for unichain policies (raises if the system is singular).
    """
    S = mdp.n_states
    R = mdp.rewards(lam)
    P = np.vstack([mdp.transitions[policy[s]][s].toarray().ravel() for s in range(S)])
    r = np.array([R[s, policy[s]] for s in range(S)])
    A = np.eye(S) - P
    A[:, 0] = 1.0  # h(0)=0 frees column 0 for the gain unknown
    x = np.linalg.solve(A, r)
    return float(x[0])


def enumerate_policies(mdp, lam):
    """Best gain over every stationary deterministic policy (oracle path)."""
    best_gain, best_policy = -np.inf, None
    for flat in itertools.product(range(mdp.n_actions), repeat=mdp.n_states):
        g = policy_gain(mdp, np.asarray(flat), lam)
        if g > best_gain:
            best_gain, best_policy = g, np.asarray(flat)
    return best_gain, best_policy


@dataclass
class DpSolution:
    mdp: TinyMdp
    lam: float
    gain: float
    bias: np.ndarray
    policy: np.ndarray

    def stationary_distribution(self):
        S = self.mdp.n_states
        P = np.vstack([self.mdp.transitions[self.policy[s]][s].toarray().ravel()
                       for s in range(S)])
        A = P.T - np.eye(S)
        A[-1, :] = 1.0
        b = np.zeros(S)
        b[-1] = 1.0
        pi = np.linalg.solve(A, b)
        pi = np.clip(pi, 0.0, None)
        return pi / pi.sum()

    def evaluate(self):
        """Exact long-run (reward, resource, throughput) per slot of the policy."""
        pi = self.stationary_distribution()
        thr = float(sum(pi[s] * self.mdp.throughput[s, self.policy[s]]
                        for s in range(self.mdp.n_states)))
        spend = float(sum(pi[s] * self.mdp.cost[s, self.policy[s]]
                          for s in range(self.mdp.n_states)))
        return thr - self.lam * spend, spend, thr

    def act(self, bufs, chans):
        """Allocation for a decision-time state given as (bufs, chans) tuples."""
        idx = self.mdp.states.index((tuple(map(tuple, bufs)), tuple(chans)))
        return self.mdp.action_allocation(self.policy[idx])

    def dump_csv(self, policy_path, value_path):
        with open(policy_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["state", "action"])
            for s, st in enumerate(self.mdp.states):
                w.writerow([repr(st), repr(self.mdp.actions[self.policy[s]])])
        with open(value_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["state", "bias"])
            for s, st in enumerate(self.mdp.states):
                w.writerow([repr(st), format(self.bias[s], ".12g")])


def dp_optimal(users, e_max, lam, config=None, success_model=None, mdp=None):
    """Exact optimal policy at a fixed multiplier; see module docstring."""
    config = config or DpConfig()
    if mdp is None:
        mdp = build_mdp(users, e_max, config, success_model)
    gain, bias, policy = relative_value_iteration(mdp, lam, config)
    return DpSolution(mdp=mdp, lam=float(lam), gain=gain, bias=bias, policy=policy)
