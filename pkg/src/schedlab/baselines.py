"""Classical per-slot allocation rules and hard-cap projections.

All rules see the decision-time buffers (list of per-user count vectors
indexed by remaining time; slot 0 is always empty) and produce per-job
allocations in the same layout.  ``budget`` is the resource intended for the
slot; per-job allocations are capped at ``e_max``.

* ``edf``     -- all jobs at the (globally) smallest remaining time split the
                 budget equally; capped leftovers are reported, not
                 redistributed, which is exactly why this rule underuses the
                 budget when urgent jobs are few.  A flag switches to the
                 per-user-minimal reading (each user's own most urgent bucket
                 joins the split).
* ``uniform`` -- every buffered job splits the budget equally.
* ``static_program`` -- maximizes the one-slot expected weighted throughput
                 subject to the budget, by bisecting the price of resource;
                 given the price, each bucket solves a 1-D concave problem.
* ``cap_scale`` / ``cap_earliest`` -- project an arbitrary allocation onto a
                 hard per-slot expenditure cap, either by uniform scaling
                 (direction preserving) or by funding the most urgent buckets
                 first with a partially scaled boundary bucket.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import ConfigError
from .service import success_probability

__all__ = [
    "StaticProblem",
    "edf",
    "uniform",
    "static_program",
    "expected_throughput",
    "cap_scale",
    "cap_earliest",
]


def _as_buffers(buffers):
    bufs = [np.asarray(b) for b in buffers]
    for i, b in enumerate(bufs):
        if b.ndim != 1 or b.shape[0] < 2:
            raise ConfigError(f"user {i + 1}: buffer must be a 1-D vector with >= 2 slots")
        if np.any(b < 0):
            raise ConfigError(f"user {i + 1}: negative buffer count")
    return bufs


def _zero_alloc(buffers):
    return [np.zeros(len(b)) for b in buffers]


def expenditure(allocation, buffers):
    """Total resource a (allocation, buffers) pair would charge this slot."""
    return float(sum(np.asarray(a) @ np.asarray(b) for a, b in zip(allocation, buffers)))


# ---------- deadline-driven splits ----------


def edf(buffers, budget, e_max, per_user=False):
    """Earliest-deadline-first split; returns (allocation, unspent residue)."""
    if budget < 0 or e_max <= 0:
        raise ConfigError("budget must be >= 0 and e_max > 0")
    bufs = _as_buffers(buffers)
    alloc = _zero_alloc(bufs)
    targets = []  # (user, bucket) pairs that join the split
    if per_user:
        for i, b in enumerate(bufs):
            occupied = np.nonzero(b[1:])[0]
            if occupied.size:
                targets.append((i, int(occupied[0]) + 1))
    else:
        best = None
        for i, b in enumerate(bufs):
            occupied = np.nonzero(b[1:])[0]
            if occupied.size:
                tau = int(occupied[0]) + 1
                if best is None or tau < best:
                    best = tau
        if best is not None:
            targets = [(i, best) for i, b in enumerate(bufs)
                       if best < len(b) and b[best] > 0]
    jobs = sum(int(bufs[i][tau]) for i, tau in targets)
    if jobs == 0:
        return alloc, float(budget)
    per_job = min(budget / jobs, e_max)
    for i, tau in targets:
        alloc[i][tau] = per_job
    return alloc, float(budget - per_job * jobs)


def uniform(buffers, budget, e_max):
    """Every buffered job gets the same share; returns (allocation, residue)."""
    if budget < 0 or e_max <= 0:
        raise ConfigError("budget must be >= 0 and e_max > 0")
    bufs = _as_buffers(buffers)
    alloc = _zero_alloc(bufs)
    jobs = sum(int(b[1:].sum()) for b in bufs)
    if jobs == 0:
        return alloc, float(budget)
    per_job = min(budget / jobs, e_max)
    for i, b in enumerate(bufs):
        alloc[i][1:][b[1:] > 0] = per_job
    return alloc, float(budget - per_job * jobs)


# ---------- one-slot concave program ----------


@dataclass
class StaticProblem:
    """One slot of the allocation problem, channels observed or averaged out.

    When ``channels`` is None the success probability is replaced by its
    expectation under each user's ``channel_laws`` entry (levels, probs),
    which is the substitution used when the mask hides channels.
    """

    buffers: list
    weights: list
    distances: list
    e_max: float
    budget: float
    channels: list | None = None
    channel_laws: list | None = None
    success_model: object = field(default=success_probability)

    def __post_init__(self):
        self.buffers = _as_buffers(self.buffers)
        n = len(self.buffers)
        if len(self.weights) != n or len(self.distances) != n:
            raise ConfigError("weights and distances must match the user count")
        if self.e_max <= 0:
            raise ConfigError("e_max must be > 0")
        if self.budget < 0:
            raise ConfigError("budget must be >= 0")
        if (self.channels is None) == (self.channel_laws is None):
            raise ConfigError("exactly one of channels / channel_laws is required")
        if self.channels is not None and len(self.channels) != n:
            raise ConfigError("channels must match the user count")
        if self.channel_laws is not None and len(self.channel_laws) != n:
            raise ConfigError("channel_laws must match the user count")

    def success(self, user, e):
        """Per-job success probability (or its channel expectation) for a user."""
        f = self.distances[user]
        if self.channels is not None:
            return self.success_model(e, self.channels[user], f)
        levels, probs = self.channel_laws[user]
        e = np.asarray(e, dtype=float)
        out = 0.0
        for lv, pr in zip(levels, probs):
            out = out + pr * np.asarray(self.success_model(e, lv, f), dtype=float)
        return out


def _check_concave_increasing(prob_fn, e_max):
    grid = np.linspace(0.0, e_max, 65)
    vals = np.asarray(prob_fn(grid), dtype=float)
    if np.any(np.diff(vals) < -1e-12):
        raise ConfigError("success model must be nondecreasing in the allocation")
    if np.any(np.diff(vals, 2) > 1e-9):
        raise ConfigError("success model must be concave in the allocation")


def _best_response(weight, prob_fn, price, e_max):
    """argmax_{0<=e<=e_max} weight*p(e) - price*e for concave increasing p."""
    if weight == 0.0:
        return 0.0
    res = minimize_scalar(lambda e: -(weight * float(prob_fn(e)) - price * e),
                          bounds=(0.0, e_max), method="bounded",
                          options={"xatol": 1e-12})
    e = float(res.x)
    # the bounded solver never quite touches the ends; snap when they win
    candidates = [0.0, e, e_max]
    vals = [weight * float(prob_fn(x)) - price * x for x in candidates]
    return candidates[int(np.argmax(vals))]


def static_program(problem, budget_rel_tol=1e-8, max_bisections=200):
    """Budget-constrained one-slot allocation via price bisection.

    Occupied buckets buy resource as long as the marginal weighted success
    beats the price; the price is bisected until the spend matches the budget
    within ``budget_rel_tol * budget`` (or the budget is slack at price 0).
    """
    bufs = problem.buffers
    alloc = _zero_alloc(bufs)
    occupied = [(i, tau) for i, b in enumerate(bufs) for tau in range(1, len(b)) if b[tau] > 0]
    if not occupied or problem.budget == 0.0:
        return alloc
    users = sorted({i for i, _ in occupied})
    prob_fns = {i: (lambda e, i=i: problem.success(i, e)) for i in users}
    for i in users:
        _check_concave_increasing(prob_fns[i], problem.e_max)
    # counts may be fractional (expected occupancy), so no truncation here
    jobs = sum(float(bufs[i][tau]) for i, tau in occupied)
    if problem.e_max * jobs <= problem.budget:
        for i, tau in occupied:
            alloc[i][tau] = problem.e_max  # budget slack: saturate every job
        return alloc

    def spend(price):
        total, shares = 0.0, {}
        for i, tau in occupied:
            e = _best_response(problem.weights[i], prob_fns[i], price, problem.e_max)
            shares[(i, tau)] = e
            total += e * bufs[i][tau]
        return total, shares

    # bracket the clearing price
    lo = 0.0
    hi = max(problem.weights[i] for i in users) * 4.0 / problem.e_max + 1.0
    total_hi, _ = spend(hi)
    while total_hi > problem.budget:
        hi *= 2.0
        total_hi, _ = spend(hi)
        if hi > 1e12:
            raise ConfigError("could not bracket the budget price")
    tol = budget_rel_tol * problem.budget
    shares = {}
    for _ in range(max_bisections):
        mid = 0.5 * (lo + hi)
        total, shares = spend(mid)
        if total > problem.budget:
            lo = mid
        else:
            hi = mid
        if abs(total - problem.budget) <= tol:
            break
    else:
        total, shares = spend(hi)  # feasible side of the bracket
    for (i, tau), e in shares.items():
        alloc[i][tau] = e
    return alloc


def expected_throughput(problem, allocation):
    """Expected weighted one-slot throughput of an allocation."""
    total = 0.0
    for i, b in enumerate(problem.buffers):
        a = np.asarray(allocation[i], dtype=float)
        probs = np.asarray(problem.success(i, a), dtype=float)
        total += problem.weights[i] * float(probs[1:] @ b[1:])
    return total


# ---------- hard-cap projections ----------


def cap_scale(allocation, buffers, cap):
    """Uniformly scale the allocation so the slot expenditure fits the cap.

    Direction preserving: the output is a scalar multiple of the input.
    """
    if cap < 0:
        raise ConfigError("cap must be >= 0")
    bufs = _as_buffers(buffers)
    alloc = [np.asarray(a, dtype=float).copy() for a in allocation]
    spend = expenditure(alloc, bufs)
    if spend <= cap:
        return alloc
    factor = cap / spend if spend > 0 else 0.0
    return [a * factor for a in alloc]


def cap_earliest(allocation, buffers, cap):
    """Fund buckets in deadline order until the cap binds.

    Buckets are visited by (remaining time, user index); the first bucket the
    cap cannot fully fund is scaled to spend exactly the remainder, and every
    later bucket is zeroed.
    """
    if cap < 0:
        raise ConfigError("cap must be >= 0")
    bufs = _as_buffers(buffers)
    alloc = [np.asarray(a, dtype=float).copy() for a in allocation]
    order = sorted((tau, i) for i, b in enumerate(bufs) for tau in range(1, len(b)))
    left = float(cap)
    out = [np.zeros_like(a) for a in alloc]
    for tau, i in order:
        cost = float(alloc[i][tau] * bufs[i][tau])
        if cost <= left:
            out[i][tau] = alloc[i][tau]
            left -= cost
        elif cost > 0.0:
            out[i][tau] = alloc[i][tau] * (left / cost)
            left = 0.0
    return out
