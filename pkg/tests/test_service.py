"""Success-probability map: shape, identities, and domain checks."""

import numpy as np
import pytest

from schedlab import success_probability


def test_zero_energy_is_exactly_zero():
    for c in (0.5, 1.0, 2.0, 7.3):
        assert success_probability(0.0, c) == 0.0


def test_matches_tanh_closed_form():
    rng = np.random.default_rng(7)
    e = rng.uniform(0.0, 5.0, size=200)
    c = rng.uniform(0.2, 4.0, size=200)
    f = rng.uniform(0.5, 2.0, size=200)
    expected = np.tanh(e / (f**3 * c))
    assert np.max(np.abs(success_probability(e, c, f) - expected)) < 1e-12


def test_scalar_in_scalar_out():
    p = success_probability(1.0, 2.0)
    assert isinstance(p, float)
    assert 0.0 < p < 1.0


def test_monotone_in_energy_and_channel():
    e = np.linspace(0.0, 4.0, 100)
    p = success_probability(e, 1.5)
    assert np.all(np.diff(p) > 0)
    # higher level value means worse attenuation, so probability drops
    c = np.linspace(0.5, 4.0, 100)
    p = success_probability(1.0, c)
    assert np.all(np.diff(p) < 0)
    f = np.linspace(0.5, 3.0, 100)
    p = success_probability(1.0, 1.0, f)
    assert np.all(np.diff(p) < 0)


def test_concave_in_energy():
    e = np.linspace(0.0, 3.0, 200)
    p = success_probability(e, 1.0)
    assert np.all(np.diff(p, 2) < 1e-12)


def test_saturates_toward_one():
    assert success_probability(10.0, 1.0) < 1.0
    assert success_probability(50.0, 1.0) == pytest.approx(1.0, abs=1e-12)


def test_broadcasting():
    e = np.array([[0.0, 1.0], [2.0, 3.0]])
    p = success_probability(e, 1.0)
    assert p.shape == (2, 2)
    assert p[0, 0] == 0.0


def test_domain_errors():
    with pytest.raises(ValueError):
        success_probability(-0.1, 1.0)
    with pytest.raises(ValueError):
        success_probability(np.inf, 1.0)
    with pytest.raises(ValueError):
        success_probability(1.0, 0.0)
    with pytest.raises(ValueError):
        success_probability(1.0, -1.0)
    with pytest.raises(ValueError):
        success_probability(1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        success_probability(np.array([0.0, np.nan]), 1.0)
