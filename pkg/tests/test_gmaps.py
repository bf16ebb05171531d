"""Truncation-map values, certified constants, and family structure."""

import numpy as np
import pytest

from gaugeflow.bodies import ball, ellipsoid, polytope
from gaugeflow.gmaps import GDeltaMap

SQUARE = np.array([[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]])


def test_frozen_values_square():
    m = GDeltaMap(polytope(SQUARE), 0.5)
    # gauge((3,0)) = 3 on the square, factor (3 - 1.5)/3; the polytope gauge
    # is resolved by bisection to relative 1e-12
    assert m.apply(np.array([3.0, 0.0])) == pytest.approx([1.5, 0.0], abs=1e-11)
    # inside the parallel set the map collapses to zero
    assert m.apply(np.array([1.2, 0.0])) == pytest.approx([0.0, 0.0], abs=0.0)
    assert m.apply(np.array([0.0, 0.0])) == pytest.approx([0.0, 0.0], abs=0.0)


def test_frozen_values_ball():
    m = GDeltaMap(ball(1.0), 0.25)
    out = m.apply(np.array([0.0, -2.0]))
    assert out == pytest.approx([0.0, -0.75], abs=1e-14)


def test_certified_constants():
    b = ball(1.0)
    assert GDeltaMap(b, 0.5).forward_lipschitz_bound() == pytest.approx(3.0)
    assert GDeltaMap(b, 0.5).inverse_lipschitz_bound() == pytest.approx(9.0)
    e = ellipsoid(np.array([[0.25, 0.0], [0.0, 1.0]]))  # radii 1 and 2
    assert GDeltaMap(e, 1.0).forward_lipschitz_bound() == pytest.approx(12.0)
    assert GDeltaMap(e, 1.0).inverse_lipschitz_bound() == pytest.approx(24.0)
    with pytest.raises(ValueError):
        GDeltaMap(b, 0.0).inverse_lipschitz_bound()


def test_delta_validation():
    with pytest.raises(ValueError):
        GDeltaMap(ball(1.0), -0.1)
    GDeltaMap(ball(1.0), 0.0)  # identity-threshold map is allowed


def test_zero_delta_map_keeps_direction():
    m = GDeltaMap(ball(1.0), 0.0)
    xi = np.array([3.0, 4.0])  # gauge 5
    out = m.apply(xi)
    assert out == pytest.approx(xi * (4.0 / 5.0), rel=1e-14)


def test_forward_lipschitz_sampled():
    rng = np.random.default_rng(31)
    for body in (ball(1.0), polytope(SQUARE)):
        for delta in (0.1, 0.5, 1.0):
            m = GDeltaMap(body, delta)
            xi = rng.normal(0.0, 3.0, (4000, 2))
            eta = rng.normal(0.0, 3.0, (4000, 2))
            lhs = np.hypot(*(m.apply_many(xi) - m.apply_many(eta)).T)
            rhs = m.forward_lipschitz_bound() * np.hypot(*(xi - eta).T)
            assert np.max(lhs - rhs) <= 1e-10


def test_inverse_lipschitz_sampled():
    rng = np.random.default_rng(32)
    body = ellipsoid(np.array([[0.25, 0.0], [0.0, 1.0]]))
    base = GDeltaMap(body, 0.0)
    from gaugeflow.bodies import gauge_many
    for delta in (0.1, 0.5, 1.0):
        m = GDeltaMap(body, delta)
        xi = rng.normal(0.0, 4.0, (4000, 2))
        scale = (1.0 + delta) * (1.0 + 10.0 ** rng.uniform(-3, 1, 4000))
        xi = xi * (scale / gauge_many(body, xi))[:, None]
        eta = rng.normal(0.0, 4.0, (4000, 2))
        lhs = np.hypot(*(xi - eta).T)
        rhs = m.inverse_lipschitz_bound() \
            * np.hypot(*(base.apply_many(xi) - base.apply_many(eta)).T)
        assert np.max(lhs - rhs) <= 1e-9


def test_monotone_family_bitwise():
    rng = np.random.default_rng(33)
    body = polytope(SQUARE)
    xi = rng.normal(0.0, 5.0, (5000, 2))
    norms = [np.hypot(*GDeltaMap(body, d).apply_many(xi).T)
             for d in (0.1, 0.2, 0.4, 0.8)]
    for a, b in zip(norms, norms[1:]):
        assert np.all(b <= a)


def test_collapse_bound_ball_unit():
    # for the unit ball the map family collapses at exactly delta / r_E
    rng = np.random.default_rng(34)
    body = ball(1.0)
    xi = rng.normal(0.0, 4.0, (5000, 2))
    for delta in (0.1, 0.5, 1.0):
        m = GDeltaMap(body, delta)
        gap = np.hypot(*(m.apply_many(xi)
                         - GDeltaMap(body, 0.0).apply_many(xi)).T)
        assert np.max(gap) <= m.collapse_bound() + 1e-9
