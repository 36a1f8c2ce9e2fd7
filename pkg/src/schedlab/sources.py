"""Arrival and channel processes feeding the schedulers.

Synthetic sources are parameterized to hit target per-slot means and are
seedable through ``reset(seed_seq)``; every instance owns a counter-based
(Philox) stream, so trajectories are reproducible and independent across
sources.  Trace sources replay a recorded column and wrap around past the
end of the record.

Arrival counts per slot:
  * ``BernoulliArrivals(p)``      -- 0/1 arrivals, mean p (rates <= 1).
  * ``PoissonArrivals(rate, cap)``-- Poisson right-truncated at ``cap`` with
    the tail mass absorbed into the cap, so the support stays bounded; the
    truncation bias is negligible for cap >> rate.
  * ``TraceArrivals(values)``     -- recorded counts.

Channel levels per slot:
  * ``MarkovChannel(levels, mean, persistence)`` -- stationary law is a
    Binomial(L-1, q) over the level indices, so for evenly spaced levels the
    stationary mean is levels[0] + q*(levels[-1]-levels[0]) and q is solved
    from the target mean.  One-step transitions keep the current level with
    probability ``persistence`` and otherwise redraw from the stationary law,
    which leaves the stationary law invariant for any persistence in [0, 1).
  * ``TraceChannel(indices, levels)`` -- recorded level indices.

Trace CSV format (shared by arrivals and channels): header ``slot,user,value``;
per user the slots must be exactly 0..K with no gaps or duplicates and values
must be non-negative integers.  Violations raise TraceFormatError with the
offending row number.
"""

from __future__ import annotations

import csv
import math

import numpy as np

from .errors import ConfigError, TraceFormatError

__all__ = [
    "BernoulliArrivals",
    "PoissonArrivals",
    "TraceArrivals",
    "MarkovChannel",
    "TraceChannel",
    "read_trace",
    "write_trace",
]


def _generator(seed_seq):
    return np.random.Generator(np.random.Philox(seed_seq))


# ---------- arrivals ----------


class BernoulliArrivals:
    """At most one arrival per slot; mean rate p (scaled rates clip at 1)."""

    def __init__(self, p):
        if not (0.0 <= p <= 1.0):
            raise ConfigError(f"bernoulli rate must be in [0,1], got {p}")
        self.p = float(p)
        self._rng = None

    @property
    def max_per_slot(self):
        return 1

    def reset(self, seed_seq):
        self._rng = _generator(seed_seq)

    def _rate(self, scale):
        return min(1.0, self.p * scale)

    def sample(self, slot, scale=1.0):
        return int(self._rng.random() < self._rate(scale))

    def pmf(self, scale=1.0):
        p = self._rate(scale)
        return {0: 1.0 - p, 1: p}

    def mean(self, scale=1.0):
        return self._rate(scale)


class PoissonArrivals:
    """Poisson arrivals right-truncated at ``cap`` (tail collapses onto cap)."""

    def __init__(self, rate, cap=16):
        if rate < 0 or not math.isfinite(rate):
            raise ConfigError(f"poisson rate must be finite and >= 0, got {rate}")
        if cap < 1:
            raise ConfigError(f"poisson cap must be >= 1, got {cap}")
        self.rate = float(rate)
        self.cap = int(cap)
        self._rng = None

    @property
    def max_per_slot(self):
        return self.cap

    def reset(self, seed_seq):
        self._rng = _generator(seed_seq)

    def sample(self, slot, scale=1.0):
        return int(min(self._rng.poisson(self.rate * scale), self.cap))

    def pmf(self, scale=1.0):
        lam = self.rate * scale
        probs = {}
        acc = 0.0
        for k in range(self.cap):
            pk = math.exp(-lam) * lam**k / math.factorial(k)
            probs[k] = pk
            acc += pk
        probs[self.cap] = max(0.0, 1.0 - acc)
        return probs

    def mean(self, scale=1.0):
        return sum(k * p for k, p in self.pmf(scale).items())


class TraceArrivals:
    """Replays a recorded arrival column, wrapping past the end."""

    def __init__(self, values):
        vals = np.asarray(values, dtype=np.int64)
        if vals.ndim != 1 or vals.size == 0:
            raise ConfigError("arrival trace must be a nonempty 1-D sequence")
        if np.any(vals < 0):
            raise ConfigError("arrival trace contains negative counts")
        self.values = vals

    @property
    def max_per_slot(self):
        return int(self.values.max())

    def reset(self, seed_seq):
        pass  # no randomness to seed

    def sample(self, slot, scale=1.0):
        if scale != 1.0:
            raise ConfigError("trace arrival sources cannot be rate-scaled")
        return int(self.values[slot % len(self.values)])

    def mean(self, scale=1.0):
        return float(self.values.mean())


# ---------- channels ----------


class MarkovChannel:
    """Finite-level Markov channel with a binomial stationary law.

    ``levels`` must be strictly increasing and, when a target ``mean`` is
    given, evenly spaced (the binomial index law is affine in its parameter
    only under even spacing).  Alternatively pass ``stationary`` explicitly.
    """

    def __init__(self, levels=(1.0, 2.0, 3.0, 4.0), mean=None, persistence=0.5,
                 stationary=None):
        self.levels = np.asarray(levels, dtype=float)
        if self.levels.ndim != 1 or self.levels.size < 1:
            raise ConfigError("levels must be a nonempty 1-D sequence")
        if np.any(self.levels <= 0):
            raise ConfigError("channel levels must be positive")
        if np.any(np.diff(self.levels) <= 0):
            raise ConfigError("channel levels must be strictly increasing")
        if not (0.0 <= persistence < 1.0):
            raise ConfigError("persistence must be in [0, 1)")
        self.persistence = float(persistence)
        if stationary is not None:
            pi = np.asarray(stationary, dtype=float)
            if pi.shape != self.levels.shape or np.any(pi < 0) or not np.isclose(pi.sum(), 1.0):
                raise ConfigError("stationary must be a distribution over the levels")
            self._pi = pi / pi.sum()
        else:
            if mean is None:
                mean = float(self.levels.mean())
            self._pi = self._binomial_stationary(mean)
        self._rng = None
        self._state = None
        self._refresh_transition()

    def _binomial_stationary(self, mean):
        lo, hi = self.levels[0], self.levels[-1]
        if len(self.levels) == 1:
            return np.ones(1)
        gaps = np.diff(self.levels)
        if not np.allclose(gaps, gaps[0]):
            raise ConfigError("mean targeting needs evenly spaced levels; "
                              "pass stationary=... instead")
        if not (lo <= mean <= hi):
            raise ConfigError(f"target mean {mean} outside level range [{lo}, {hi}]")
        n = len(self.levels) - 1
        q = (mean - lo) / (hi - lo)
        ks = np.arange(n + 1)
        return np.array([math.comb(n, k) for k in ks]) * q**ks * (1 - q) ** (n - ks)

    def _refresh_transition(self):
        n = len(self.levels)
        self._T = self.persistence * np.eye(n) + (1 - self.persistence) * np.tile(self._pi, (n, 1))
        self._cum = np.cumsum(self._T, axis=1)
        self._cum_pi = np.cumsum(self._pi)

    def retarget(self, mean):
        """Swap the stationary law (dynamics switch); keeps state and stream."""
        self._pi = self._binomial_stationary(mean)
        self._refresh_transition()

    def reset(self, seed_seq):
        self._rng = _generator(seed_seq)
        self._state = int(np.searchsorted(self._cum_pi, self._rng.random()))

    def sample(self, slot):
        value = float(self.levels[self._state])
        self._state = int(np.searchsorted(self._cum[self._state], self._rng.random()))
        return value

    # exact quantities for the average-reward solver
    def stationary(self):
        return self._pi.copy()

    def transition_matrix(self):
        return self._T.copy()


class TraceChannel:
    """Replays recorded level indices mapped through a configured level set."""

    def __init__(self, indices, levels=(1.0, 2.0, 3.0, 4.0)):
        self.levels = np.asarray(levels, dtype=float)
        if np.any(self.levels <= 0):
            raise ConfigError("channel levels must be positive")
        idx = np.asarray(indices, dtype=np.int64)
        if idx.ndim != 1 or idx.size == 0:
            raise ConfigError("channel trace must be a nonempty 1-D sequence")
        if np.any(idx < 0) or np.any(idx >= len(self.levels)):
            raise ConfigError(
                f"channel trace indices must lie in [0, {len(self.levels) - 1}]")
        self.indices = idx

    def reset(self, seed_seq):
        pass

    def sample(self, slot):
        return float(self.levels[self.indices[slot % len(self.indices)]])

    def mean(self):
        return float(self.levels[self.indices].mean())


# ---------- trace CSV ----------


def read_trace(path):
    """Parse a slot,user,value CSV into per-user integer columns.

    Returns (columns, means): dicts keyed by user id.  Raises
    TraceFormatError naming the offending row on any contract violation:
    bad header, non-integer or negative values, duplicate or missing slots.
    """
    rows = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TraceFormatError(f"{path}: empty trace file") from None
        if [h.strip() for h in header] != ["slot", "user", "value"]:
            raise TraceFormatError(
                f"{path}: row 1: header must be 'slot,user,value', got {','.join(header)!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise TraceFormatError(f"{path}: row {lineno}: expected 3 columns, got {len(row)}")
            try:
                slot, user, value = (int(x) for x in row)
            except ValueError:
                raise TraceFormatError(
                    f"{path}: row {lineno}: non-integer field in {row!r}") from None
            if slot < 0:
                raise TraceFormatError(f"{path}: row {lineno}: negative slot {slot}")
            if value < 0:
                raise TraceFormatError(f"{path}: row {lineno}: negative value {value}")
            per_user = rows.setdefault(user, {})
            if slot in per_user:
                raise TraceFormatError(
                    f"{path}: row {lineno}: duplicate slot {slot} for user {user} "
                    f"(first at row {per_user[slot][1]})")
            per_user[slot] = (value, lineno)
    if not rows:
        raise TraceFormatError(f"{path}: trace contains no data rows")
    columns = {}
    for user, per_user in sorted(rows.items()):
        top = max(per_user)
        for slot in range(top + 1):
            if slot not in per_user:
                raise TraceFormatError(
                    f"{path}: user {user}: missing slot {slot} (slots must be "
                    f"contiguous from 0 through {top})")
        columns[user] = np.array([per_user[s][0] for s in range(top + 1)], dtype=np.int64)
    means = {u: float(col.mean()) for u, col in columns.items()}
    return columns, means


def write_trace(path, columns):
    """Inverse of read_trace; used by the preset tooling and tests."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["slot", "user", "value"])
        for user in sorted(columns):
            for slot, value in enumerate(columns[user]):
                writer.writerow([slot, user, int(value)])
