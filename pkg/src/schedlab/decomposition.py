"""User-level decomposition of the joint scheduling process.

The joint reward sum_i (weight_i * served_i - lam * e_i . B_i) splits by
construction into one term per user, and user i's term depends only on user
i's buffer, channel, and allocation.  One shared policy can therefore be
trained on N small per-user experiences instead of one wide joint one:

    sub-observation:  [index/N, B_i (zero-padded), a_i?, c_i?]   (masked)
    sub-action:       e_i, zero-padded to the widest user
    sub-reward:       weight_i * served_i - lam * e_i . B_i

The identity of the user enters as the single scalar index/N in (0, 1], so
the observation width is set by the widest deadline, not by N; adding users
adds experience, not input width.  Padding positions correspond to buckets
the user does not have: they are sliced off before actions reach the
environment and stay zero in observations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import ObservabilityMask
from .errors import ConfigError

__all__ = [
    "SubSample",
    "sub_obs_dim",
    "sub_observation",
    "decompose_step",
    "unify",
    "DecomposedEnv",
]


@dataclass
class SubSample:
    """One user's slice of one slot, replay-ready."""

    user: int                 # 1-based tag
    slot: int
    observation: np.ndarray   # what this user's agent saw when acting
    action: np.ndarray        # padded allocation it took
    reward: float
    done: float = 0.0


def sub_obs_dim(mask, pad_deadline):
    dim = 1  # the index/N identity feature
    if mask.buffers:
        dim += pad_deadline + 1
    if mask.arrivals:
        dim += 1
    if mask.channels:
        dim += 1
    return dim


def sub_observation(index, n_users, buffer, arrival, channel, mask, pad_deadline):
    """Per-user observation in the fixed [index, buffers, arrivals, channels] order."""
    buffer = np.asarray(buffer, dtype=float)
    if buffer.shape[0] > pad_deadline + 1:
        raise ConfigError(
            f"user {index}: buffer wider ({buffer.shape[0]}) than pad ({pad_deadline + 1})")
    parts = [np.array([index / n_users], dtype=float)]
    if mask.buffers:
        padded = np.zeros(pad_deadline + 1)
        padded[:buffer.shape[0]] = buffer
        parts.append(padded)
    if mask.arrivals:
        parts.append(np.array([float(arrival)]))
    if mask.channels:
        parts.append(np.array([float(channel)]))
    return np.concatenate(parts)


def _pad_action(action, pad_deadline):
    action = np.asarray(action, dtype=float)
    padded = np.zeros(pad_deadline + 1)
    padded[:action.shape[0]] = action
    return padded


def decompose_step(outcome, users, mask=None, pad_deadline=None, done=0.0):
    """Split one joint StepOutcome into N SubSamples.

    The sub-rewards sum back to the joint reward (up to float reassociation
    of the lam * E term).  Returns [] for zero users.
    """
    if mask is None:
        mask = ObservabilityMask()
    if not users:
        return []
    if pad_deadline is None:
        pad_deadline = max(u.deadline for u in users)
    n = len(users)
    samples = []
    for i, u in enumerate(users):
        reward = u.weight * float(outcome.served[i]) \
            - outcome.lam * float(outcome.resource_per_user[i])
        samples.append(SubSample(
            user=u.index,
            slot=outcome.slot,
            observation=sub_observation(u.index, n, outcome.buffers[i],
                                        outcome.arrivals[i], outcome.channels[i],
                                        mask, pad_deadline),
            action=_pad_action(outcome.allocation[i], pad_deadline),
            reward=reward,
            done=float(done),
        ))
    return samples


def unify(step_samples):
    """Flatten per-slot sub-sample lists into one user-tagged stream.

    Ordering is slot-major then user, so per-user subsequences stay in time
    order; an empty input (or zero users) yields an empty stream.
    """
    stream = []
    for per_slot in step_samples:
        stream.extend(per_slot)
    return stream


class DecomposedEnv:
    """Runs a SingleHopEnv as N parallel per-user experience sources.

    reset() returns the N sub-observations; step() takes N padded per-user
    actions, drives the joint environment once, and returns the next
    sub-observations, the per-user rewards, and the joint outcome.
    """

    def __init__(self, env, pad_deadline=None):
        self.env = env
        self.pad_deadline = pad_deadline if pad_deadline is not None \
            else max(u.deadline for u in env.users)
        if self.pad_deadline < max(u.deadline for u in env.users):
            raise ConfigError("pad_deadline narrower than the widest user")

    @property
    def n_contexts(self):
        return self.env.n_users

    @property
    def obs_dim(self):
        return sub_obs_dim(self.env.mask, self.pad_deadline)

    @property
    def action_dim(self):
        return self.pad_deadline + 1

    def fork(self, seed):
        return DecomposedEnv(self.env.fork(seed), self.pad_deadline)

    def _sub_observations(self):
        buffers, arrivals, channels = self.env.component_view()
        n = self.env.n_users
        return [sub_observation(u.index, n, buffers[i], arrivals[i], channels[i],
                                self.env.mask, self.pad_deadline)
                for i, u in enumerate(self.env.users)]

    def reset(self, seed=None):
        self.env.reset(seed)
        return self._sub_observations()

    def step(self, padded_actions, lam=0.0):
        if len(padded_actions) != self.env.n_users:
            raise ConfigError(
                f"need {self.env.n_users} per-user actions, got {len(padded_actions)}")
        joint = [np.asarray(a, dtype=float)[:u.deadline + 1]
                 for u, a in zip(self.env.users, padded_actions)]
        outcome = self.env.step(joint, lam)
        rewards = [u.weight * float(outcome.served[i])
                   - lam * float(outcome.resource_per_user[i])
                   for i, u in enumerate(self.env.users)]
        return self._sub_observations(), rewards, outcome
