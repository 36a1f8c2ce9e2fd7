"""Shared builders for the test suite."""

import numpy as np
import pytest

from schedlab import (
    BernoulliArrivals,
    FlowSpec,
    MarkovChannel,
    MultiHopEnv,
    ObservabilityMask,
    PoissonArrivals,
    SingleHopEnv,
    UserSpec,
)


def make_user(index=1, deadline=1, weight=1.0, distance=1.0, p=0.5,
              levels=(1.0, 2.0), mean=1.5, persistence=0.5, rate=None, cap=8):
    """One UserSpec with fresh sources (never share source instances)."""
    if rate is not None:
        arr = PoissonArrivals(rate, cap=cap)
    else:
        arr = BernoulliArrivals(p)
    return UserSpec(index=index, deadline=deadline, weight=weight,
                    distance=distance, arrivals=arr,
                    channel=MarkovChannel(levels=levels, mean=mean,
                                          persistence=persistence))


def tiny_env(seed=0, mask=None):
    """The canonical 4-state instance: 1 user, deadline 1, two channel levels."""
    return SingleHopEnv([make_user()], e_max=1.0, mask=mask, seed=seed)


def four_user_env(seed=0, mask=None, e_max=2.0):
    """Heterogeneous 4-user workload (mixed deadlines, Poisson traffic)."""
    rates = (1.96, 0.91, 2.46, 0.70)
    deadlines = (6, 6, 1, 1)
    means = (1.79, 1.83, 1.82, 1.77)
    users = [make_user(index=i + 1, deadline=d, rate=r,
                       levels=(1.0, 2.0, 3.0), mean=m)
             for i, (r, d, m) in enumerate(zip(rates, deadlines, means))]
    return SingleHopEnv(users, e_max=e_max, mask=mask, seed=seed)


def one_hop_flow_env(seed=0, deadline=1, p=0.5, levels=(1.0, 2.0), mean=1.5,
                     persistence=0.5, e_max=1.0):
    """Single flow over a 2-node path: the 1-hop reduction case."""
    flow = FlowSpec(index=1, path=(1, 2), deadline=deadline, weight=1.0,
                    arrivals=BernoulliArrivals(p),
                    channels=[MarkovChannel(levels=levels, mean=mean,
                                            persistence=persistence)],
                    distances=[1.0])
    return MultiHopEnv([flow], e_max=e_max, seed=seed)


def random_flat_action(rng, env):
    return rng.uniform(0.0, env.e_max, size=env.action_dim)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
