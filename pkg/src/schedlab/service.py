"""Wireless service model: allocated resource -> per-job success probability.

A job belonging to a user at distance ``f`` whose channel currently sits at
level ``c`` succeeds with probability

    P(e, c, f) = 2 / (1 + exp(-2 e / (f^3 c))) - 1

when granted ``e`` units of resource for the slot.  The map is 0 at e=0,
strictly increasing and strictly concave in e on e >= 0, and saturates at 1,
so marginal resource buys less and less success probability.  Larger
distances and larger channel level values both slow the climb (the channel
level is an attenuation figure here: higher is worse).
"""

from __future__ import annotations

import numpy as np

__all__ = ["success_probability"]


def success_probability(energy, channel, distance=1.0):
    """Success probability of a single transmission attempt.

    Accepts scalars or broadcastable arrays; returns a float or ndarray of
    probabilities in [0, 1).  Raises ValueError on negative or non-finite
    energy and on non-positive or non-finite channel/distance.
    """
    e = np.asarray(energy, dtype=float)
    c = np.asarray(channel, dtype=float)
    f = np.asarray(distance, dtype=float)
    if not np.all(np.isfinite(e)) or np.any(e < 0):
        raise ValueError("energy must be finite and >= 0")
    if not np.all(np.isfinite(c)) or np.any(c <= 0):
        raise ValueError("channel level must be finite and > 0")
    if not np.all(np.isfinite(f)) or np.any(f <= 0):
        raise ValueError("distance must be finite and > 0")
    # exponent is <= 0, so exp never overflows
    p = 2.0 / (1.0 + np.exp(-2.0 * e / (f**3 * c))) - 1.0
    if p.ndim == 0:
        return float(p)
    return p
