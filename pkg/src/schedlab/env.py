"""Single-hop multi-user scheduling environment with hard per-job deadlines.

Each user i holds a deadline-indexed buffer B_i = [B_i^0, ..., B_i^tau_i]
where B_i^tau counts jobs whose remaining lifetime is tau slots.  Jobs arrive
with the full lifetime tau_i, may be attempted once per slot while tau >= 1,
and vanish unserved when tau hits 0.  Slot 0 of the vector is kept so the
state layout matches the action layout; it is always zero at decision time.

Per-slot event order (fixed across the whole package):

  1. arrivals of the slot are inserted at remaining time tau_i
  2. channel levels realize
  3. the scheduler observes (through the ObservabilityMask) and allocates
     a per-job resource e_i^tau in [0, e_max] to every bucket
  4. every buffered job with tau >= 1 independently succeeds with probability
     P(e_i^tau, c_i, f_i); successes leave and score weighted throughput
  5. resource E = sum_i e_i . B_i is charged for every scheduled job,
     successful or not
  6. survivors decrement tau; jobs reaching tau = 0 expire and are discarded

The per-slot reward under multiplier ``lam`` is

    r = sum_i weight_i * served_i  -  lam * E.

Randomness discipline: every source owns a counter-based (Philox) stream and
the per-job success draws consume one uniform per buffered servable job in
(user, bucket, job) order, so trajectories are bit-reproducible given the
seed and structurally identical environments consume streams identically.
Episodes are replayable: ``reset()`` advances an episode counter and derives
all child streams from (seed, episode), so the k-th episode of two
same-seeded instances matches draw for draw.

A hidden service period (availability only when t % period == 0) and a
piecewise-constant switching schedule for the arrival/channel statistics can
be attached through the ObservabilityMask; neither is ever observable, which
is exactly what makes them worth inferring from history.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AllocationError, ConfigError
from .service import success_probability

__all__ = [
    "UserSpec",
    "DynamicsPhase",
    "SwitchSchedule",
    "ObservabilityMask",
    "StepOutcome",
    "SingleHopEnv",
    "apply_hidden_period",
    "apply_switch",
    "build_observation",
]


# ---------- specs and masks ----------


@dataclass
class UserSpec:
    """One user: identity, deadline, reward weight, distance, sources."""

    index: int                 # 1-based user id
    deadline: int              # tau_i, slots of lifetime on arrival
    weight: float              # throughput weight beta_i
    distance: float            # distance figure f_i in P(e, c, f)
    arrivals: object           # arrival source (sources module protocol)
    channel: object            # channel source

    def __post_init__(self):
        if self.index < 1:
            raise ConfigError(f"user index must be >= 1, got {self.index}")
        if self.deadline < 1:
            raise ConfigError(f"deadline must be >= 1, got {self.deadline}")
        if self.weight < 0:
            raise ConfigError(f"weight must be >= 0, got {self.weight}")
        if self.distance <= 0:
            raise ConfigError(f"distance must be > 0, got {self.distance}")


@dataclass(frozen=True)
class DynamicsPhase:
    """Dynamics in force from ``slot`` on (replace semantics, not cumulative)."""

    slot: int = 0
    arrival_scale: float = 1.0
    channel_means: tuple | None = None

    def __post_init__(self):
        if self.slot < 0:
            raise ConfigError(f"switch slot must be >= 0, got {self.slot}")
        if self.arrival_scale < 0:
            raise ConfigError("arrival_scale must be >= 0")


class SwitchSchedule:
    """Piecewise-constant dynamics: the latest phase with slot <= t applies."""

    def __init__(self, phases=()):
        phases = sorted(phases, key=lambda ph: ph.slot)
        slots = [ph.slot for ph in phases]
        if len(set(slots)) != len(slots):
            raise ConfigError(f"overlapping switch entries at slots {slots}")
        self.phases = [DynamicsPhase(0)] + list(phases)

    def active(self, t):
        current = self.phases[0]
        for ph in self.phases:
            if ph.slot <= t:
                current = ph
            else:
                break
        return current


def apply_switch(t, schedule):
    """Dynamics parameters in force at slot t (base dynamics if no schedule)."""
    if schedule is None:
        return DynamicsPhase(0)
    return schedule.active(t)


def apply_hidden_period(t, base_prob, period):
    """Gate success probability on the hidden service period.

    Service is available only when t % period == 0; on off slots the success
    probability is 0 while any allocated resource is still charged.
    """
    if period < 1:
        raise ConfigError(f"service period must be >= 1, got {period}")
    if period == 1 or t % period == 0:
        return base_prob
    return np.zeros_like(np.asarray(base_prob, dtype=float))


@dataclass
class ObservabilityMask:
    """Which state components enter the observation, plus hidden dynamics.

    Observation order is fixed: [buffers..., arrivals..., channels...] with
    masked components dropped entirely.  The default exposes buffers and
    channels.  The hidden service period and the switch schedule ride along
    here because they are part of the partial-observability scenario, never
    of the observation itself.
    """

    buffers: bool = True
    arrivals: bool = False
    channels: bool = True
    service_period: int = 1
    switches: SwitchSchedule | None = None

    def __post_init__(self):
        if not (self.buffers or self.arrivals or self.channels):
            raise ConfigError("mask must expose at least one component")
        if self.service_period < 1:
            raise ConfigError(f"service period must be >= 1, got {self.service_period}")


def build_observation(buffers, arrivals, channels, mask):
    """Assemble the flat observation vector in the fixed component order."""
    parts = []
    if mask.buffers:
        parts.extend(np.asarray(b, dtype=float) for b in buffers)
    if mask.arrivals:
        parts.append(np.asarray(arrivals, dtype=float))
    if mask.channels:
        parts.append(np.asarray(channels, dtype=float))
    return np.concatenate(parts)


# ---------- step outcome ----------


@dataclass
class StepOutcome:
    """Everything one slot produced, with per-user bookkeeping.

    ``buffers``/``arrivals``/``channels`` are the decision-time snapshots
    (what the allocation acted on), ``observation`` is the next slot's
    masked observation.  ``reward == throughput - lam * resource`` exactly.
    """

    slot: int
    buffers: list
    arrivals: np.ndarray
    channels: np.ndarray
    allocation: list
    served: np.ndarray
    expired: np.ndarray
    throughput: float
    resource: float
    resource_per_user: np.ndarray
    lam: float
    reward: float
    observation: np.ndarray


# ---------- environment ----------


class SingleHopEnv:
    def __init__(self, users, e_max=2.0, mask=None, seed=0, success_model=None):
        if not users:
            raise ConfigError("need at least one user")
        indices = [u.index for u in users]
        if indices != list(range(1, len(users) + 1)):
            raise ConfigError(f"user indices must be 1..N in order, got {indices}")
        if e_max <= 0 or not np.isfinite(e_max):
            raise ConfigError(f"e_max must be finite and > 0, got {e_max}")
        self.users = list(users)
        self.e_max = float(e_max)
        self.mask = mask if mask is not None else ObservabilityMask()
        self.seed = int(seed)
        self.success_model = success_model if success_model is not None else success_probability
        if self.mask.switches is not None:
            needs_retarget = any(ph.channel_means is not None
                                 for ph in self.mask.switches.phases)
            if needs_retarget and any(not hasattr(u.channel, "retarget") for u in self.users):
                raise ConfigError("channel-mean switches need retargetable channels")
        self._episode = -1
        self._slot = None  # not usable until reset()

    # -- layout helpers --

    @property
    def n_users(self):
        return len(self.users)

    @property
    def deadlines(self):
        return [u.deadline for u in self.users]

    @property
    def action_dim(self):
        return sum(u.deadline + 1 for u in self.users)

    @property
    def obs_dim(self):
        n = self.n_users
        dim = 0
        if self.mask.buffers:
            dim += sum(u.deadline + 1 for u in self.users)
        if self.mask.arrivals:
            dim += n
        if self.mask.channels:
            dim += n
        return dim

    def split_action(self, flat):
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (self.action_dim,):
            raise AllocationError(
                f"flat allocation must have shape ({self.action_dim},), got {flat.shape}")
        out, k = [], 0
        for u in self.users:
            out.append(flat[k:k + u.deadline + 1].copy())
            k += u.deadline + 1
        return out

    def flatten_action(self, per_user):
        return np.concatenate([np.asarray(a, dtype=float) for a in per_user])

    def _validate_action(self, action):
        if isinstance(action, np.ndarray) and action.ndim == 1:
            action = self.split_action(action)
        if len(action) != self.n_users:
            raise AllocationError(
                f"allocation must cover {self.n_users} users, got {len(action)}")
        checked = []
        for u, a in zip(self.users, action):
            a = np.asarray(a, dtype=float)
            if a.shape != (u.deadline + 1,):
                raise AllocationError(
                    f"user {u.index}: allocation must have length {u.deadline + 1}, "
                    f"got {a.shape}")
            if not np.all(np.isfinite(a)):
                raise AllocationError(f"user {u.index}: non-finite allocation entry")
            if np.any(a < 0):
                raise AllocationError(f"user {u.index}: negative allocation entry")
            if np.any(a > self.e_max):
                raise AllocationError(
                    f"user {u.index}: allocation entry {a.max():g} exceeds e_max "
                    f"{self.e_max:g}")
            checked.append(a.copy())
        return checked

    # -- lifecycle --

    def fork(self, seed):
        """Same spec, fresh instance and stream (for evaluation rollouts)."""
        return SingleHopEnv(self.users, e_max=self.e_max, mask=self.mask,
                            seed=seed, success_model=self.success_model)

    def reset(self, seed=None):
        """Start a fresh episode; returns the initial observation.

        With ``seed=None`` the episode counter advances, so consecutive
        episodes differ but the whole episode sequence is a pure function of
        the construction seed.
        """
        if seed is not None:
            self.seed = int(seed)
            self._episode = -1
        self._episode += 1
        root = np.random.SeedSequence(entropy=self.seed, spawn_key=(self._episode,))
        n = self.n_users
        children = root.spawn(2 * n + 1)
        for u, ss in zip(self.users, children[:n]):
            u.arrivals.reset(ss)
        for u, ss in zip(self.users, children[n:2 * n]):
            u.channel.reset(ss)
        self._svc_rng = np.random.Generator(np.random.Philox(children[2 * n]))
        self.buffers = [np.zeros(u.deadline + 1, dtype=np.int64) for u in self.users]
        self._slot = 0
        self._applied_means = None
        self._begin_slot()
        return self.observe()

    def _begin_slot(self):
        """Arrivals + channel realization for the current slot."""
        phase = apply_switch(self._slot, self.mask.switches)
        if phase.channel_means is not None and phase.channel_means != self._applied_means:
            for u, m in zip(self.users, phase.channel_means):
                u.channel.retarget(m)
            self._applied_means = phase.channel_means
        self.arrivals = np.array(
            [u.arrivals.sample(self._slot, scale=phase.arrival_scale) for u in self.users],
            dtype=np.int64)
        for i, u in enumerate(self.users):
            self.buffers[i][u.deadline] += self.arrivals[i]
        self.channels = np.array([u.channel.sample(self._slot) for u in self.users])

    def observe(self):
        """Masked observation of the current decision point."""
        return build_observation(self.buffers, self.arrivals, self.channels, self.mask)

    def component_view(self):
        """Decision-time (buffers, arrivals, channels) snapshot, copied."""
        return ([b.copy() for b in self.buffers], self.arrivals.copy(), self.channels.copy())

    @property
    def slot(self):
        return self._slot

    def step(self, action, lam=0.0):
        if self._slot is None:
            raise RuntimeError("call reset() before step()")
        action = self._validate_action(action)
        snapshot = self.component_view()
        served = np.zeros(self.n_users, dtype=np.int64)
        expired = np.zeros(self.n_users, dtype=np.int64)
        resource_per_user = np.zeros(self.n_users)
        for i, u in enumerate(self.users):
            buf = self.buffers[i]
            alloc = action[i]
            # charged for every scheduled job whether or not it succeeds
            resource_per_user[i] = float(alloc @ buf)
            probs = np.asarray(
                self.success_model(alloc, self.channels[i], u.distance), dtype=float)
            probs = apply_hidden_period(self._slot, probs, self.mask.service_period)
            counts = buf[1:]
            total = int(counts.sum())
            hits = np.zeros(u.deadline + 1, dtype=np.int64)
            if total:
                # one uniform per buffered servable job, (bucket, job) order
                draws = self._svc_rng.random(total)
                bucket_of = np.repeat(np.arange(1, u.deadline + 1), counts)
                success = draws < probs[bucket_of]
                hits = np.bincount(bucket_of[success], minlength=u.deadline + 1)
            served[i] = int(hits.sum())
            remaining = buf - hits
            expired[i] = int(remaining[1])
            shifted = np.zeros_like(buf)
            shifted[1:u.deadline] = remaining[2:]
            self.buffers[i] = shifted
        weights = np.array([u.weight for u in self.users])
        throughput = float(weights @ served)
        resource = float(resource_per_user.sum())
        reward = throughput - lam * resource
        self._slot += 1
        self._begin_slot()
        return StepOutcome(
            slot=self._slot - 1,
            buffers=snapshot[0],
            arrivals=snapshot[1],
            channels=snapshot[2],
            allocation=action,
            served=served,
            expired=expired,
            throughput=throughput,
            resource=resource,
            resource_per_user=resource_per_user,
            lam=float(lam),
            reward=reward,
            observation=self.observe(),
        )
