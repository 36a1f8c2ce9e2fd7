"""Outer Lagrangian loop turning the average-resource constraint into a price.

The constrained problem (maximize average throughput subject to average
resource <= budget) is relaxed by a multiplier ``lam``; the inner solver
returns the unconstrained optimum at that price together with its measured
average resource and throughput.  By the envelope argument the dual function
has gradient budget - resource(lam), so projected ascent on the multiplier is

    lam_{k+1} = max(0, lam_k + alpha_k * (resource_k - budget)).

The step size halves whenever the last three multiplier iterates are not
monotone (a sliding window; ties count as monotone), and the loop stops when
the multiplier moves by at most ``delta``.

Because the inner optimum jumps between finitely many policies, the literal
last iterate can land on the infeasible side of the budget; the loop
therefore records every iterate and recommends the feasible one with the
best throughput (falling back to the least-consuming iterate when nothing
met the budget).  A per-iteration CSV (k, lam, alpha, resource, throughput)
can be emitted for inspection.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

__all__ = ["InnerSolution", "DualRecord", "DualResult", "dual_update",
           "dual_gradient", "solve_constrained"]


@dataclass
class InnerSolution:
    """What an inner solver hands back for one multiplier value."""

    policy: object
    resource: float      # measured average resource per slot
    throughput: float    # measured average weighted throughput per slot


@dataclass
class DualRecord:
    k: int
    lam: float
    alpha: float
    resource: float
    throughput: float


@dataclass
class DualResult:
    policy: object          # recommended policy (best feasible iterate)
    lam: float              # final multiplier
    record: DualRecord      # iterate the recommended policy came from
    history: list
    converged: bool


def dual_update(lam, alpha, resource, budget):
    """One projected subgradient step on the multiplier."""
    if lam < 0 or alpha <= 0:
        raise ConfigError("need lam >= 0 and alpha > 0")
    return max(0.0, lam + alpha * (resource - budget))


def dual_gradient(resource, budget):
    """Envelope gradient of the dual function at the inner optimum."""
    return budget - resource


def _monotone(a, b, c):
    return (c >= b >= a) or (c <= b <= a)


def solve_constrained(inner, budget, lam0=0.0, alpha0=0.1, delta=1e-4,
                      max_iters=60, csv_path=None, feasible_slack=0.0):
    """Run the dual loop; ``inner(lam) -> InnerSolution``.

    Stops when |lam_{k+1} - lam_k| <= delta or after ``max_iters`` inner
    solves (then flagged non-converged).  ``feasible_slack`` loosens the
    feasibility screen used for the recommendation to (1+slack)*budget.
    """
    if budget < 0:
        raise ConfigError("budget must be >= 0")
    if delta <= 0 or alpha0 <= 0 or lam0 < 0:
        raise ConfigError("need delta > 0, alpha0 > 0, lam0 >= 0")
    lam, alpha = float(lam0), float(alpha0)
    lam_trail = [lam]
    history, solutions = [], []
    converged = False
    for k in range(max_iters):
        sol = inner(lam)
        rec = DualRecord(k=k, lam=lam, alpha=alpha,
                         resource=float(sol.resource), throughput=float(sol.throughput))
        history.append(rec)
        solutions.append(sol)
        new_lam = dual_update(lam, alpha, sol.resource, budget)
        lam_trail.append(new_lam)
        if len(lam_trail) >= 3 and not _monotone(*lam_trail[-3:]):
            alpha *= 0.5
        moved = abs(new_lam - lam)
        lam = new_lam
        if moved <= delta:
            converged = True
            break
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "lambda", "alpha", "resource", "throughput"])
            for r in history:
                w.writerow([r.k] + [format(v, ".12g")
                                    for v in (r.lam, r.alpha, r.resource, r.throughput)])
    limit = budget * (1.0 + feasible_slack) + 1e-12 * max(1.0, budget)
    feasible = [i for i, r in enumerate(history) if r.resource <= limit]
    if feasible:
        best = max(feasible, key=lambda i: history[i].throughput)
    else:
        best = int(np.argmin([r.resource for r in history]))
    return DualResult(policy=solutions[best].policy, lam=lam,
                      record=history[best], history=history, converged=converged)
