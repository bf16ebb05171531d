"""Cylinder statistics and iteration lemmas, checked against hand oracles.

The dyadic-grid constructions below make the quantities exactly computable:
products of machine dyadics stay exact, so expected values can be asserted
bitwise where noted.
"""

import numpy as np
import pytest

from gaugeflow.analysis import (
    Cylinder,
    absorption_iteration,
    classify_regime,
    continuity_modulus,
    default_lags,
    eps_convergence_table,
    excess,
    geometric_convergence,
    superlevel_measure,
    write_energy_csv,
)
from gaugeflow.bodies import ball, sample_dual_boundary
from gaugeflow.gmaps import GDeltaMap
from gaugeflow.grid import Grid, GridField


@pytest.fixture(scope="module")
def grid33():
    return Grid(0.0, 1.0, 0.0, 1.0, 33, 33)


@pytest.fixture(scope="module")
def nodes33(grid33):
    return grid33.nodes()


@pytest.fixture(scope="module")
def big_cyl():
    return Cylinder(0.5, 0.5, 0.5, 0.4)


T4 = np.linspace(0.34, 0.5, 5)


def const_field(grid, X, Y, fn):
    return GridField(grid, T4, np.stack([fn(X, Y) for _ in T4]))


def test_cylinder_validation(grid33, nodes33, big_cyl):
    with pytest.raises(ValueError):
        Cylinder(0.5, 0.5, 0.5, 0.0)
    X, Y = nodes33
    fld = const_field(grid33, X, Y, lambda x, y: 0.0 * x)
    with pytest.raises(ValueError):
        excess(fld, Cylinder(0.95, 0.5, 0.5, 0.2))  # ball leaves the square
    with pytest.raises(ValueError):
        excess(fld, Cylinder(0.5, 0.5, 0.5, 0.45))  # depth leaves the times


def test_excess_affine_dyadic_is_bitwise_zero(grid33, nodes33, big_cyl):
    # 0.5*X + 0.25*Y on the dyadic grid: every product and difference is an
    # exact machine number, so the constant gradient survives the mean
    # subtraction with zero residual
    X, Y = nodes33
    fld = const_field(grid33, X, Y, lambda x, y: 0.5 * x + 0.25 * y)
    assert excess(fld, big_cyl) == 0.0


def test_excess_affine_general_is_tiny(grid33, nodes33, big_cyl):
    X, Y = nodes33
    fld = const_field(grid33, X, Y, lambda x, y: 0.3 * x + 0.4 * y)
    assert excess(fld, big_cyl) <= 1e-28


def test_excess_two_halves_exactly_one(grid33, nodes33, big_cyl):
    # |X - 0.5| has cell gradients exactly +-1 split evenly across the
    # cylinder, so the variance of the gradient is exactly 1
    X, Y = nodes33
    fld = const_field(grid33, X, Y, lambda x, y: np.abs(x - 0.5))
    assert excess(fld, big_cyl) == 1.0


def test_excess_translation_invariant_bitwise(grid33, nodes33, big_cyl):
    X, Y = nodes33
    base = const_field(grid33, X, Y, lambda x, y: np.abs(x - 0.5))
    lifted = GridField(grid33, T4, base.values + 1.0)
    assert excess(lifted, big_cyl) == excess(base, big_cyl)


def test_superlevel_frozen_fractions(grid33, nodes33, big_cyl):
    X, Y = nodes33
    steep = const_field(grid33, X, Y, lambda x, y: 2.0 * x)
    # projection on (1,0) is exactly 2, so 2 - 1.2 = 0.8 against thresholds
    assert superlevel_measure(steep, big_cyl, (1.0, 0.0), 0.2, 0.375) == 1.0
    assert superlevel_measure(steep, big_cyl, (1.0, 0.0), 0.2, 0.85) == 0.0


def test_superlevel_monotone_in_threshold(grid33, nodes33, big_cyl):
    X, Y = nodes33
    fld = const_field(grid33, X, Y,
                      lambda x, y: 2.0 * np.sin(3 * x) * np.cos(2 * y))
    fracs = [superlevel_measure(fld, big_cyl, (0.8, 0.6), 0.2, th)
             for th in np.linspace(-1.0, 2.0, 13)]
    assert all(a >= b for a, b in zip(fracs, fracs[1:]))


def test_superlevel_brute_force_recount(grid33, big_cyl):
    # independent recount with scalar loops over cells and levels
    rng = np.random.default_rng(5)
    vals = rng.normal(0.0, 0.3, (5, 33, 33))
    fld = GridField(grid33, T4, vals)
    e_star = (0.6, -0.8)
    delta, th = 0.2, -0.5
    got = superlevel_measure(fld, big_cyl, e_star, delta, th)
    above = total = 0
    hx = grid33.hx
    for k, t in enumerate(T4):
        if not big_cyl.contains_time(float(t)):
            continue
        for i in range(32):
            for j in range(32):
                cx = grid33.xs()[i] + 0.5 * grid33.hx
                cy = grid33.ys()[j] + 0.5 * grid33.hy
                if (cx - 0.5) ** 2 + (cy - 0.5) ** 2 > 0.4 ** 2 + 1e-12:
                    continue
                gx = (vals[k, i + 1, j] - vals[k, i, j]) / hx
                gy = (vals[k, i, j + 1] - vals[k, i, j]) / grid33.hy
                proj = gx * e_star[0] + gy * e_star[1]
                total += 1
                if proj - (1.0 + delta) > th:
                    above += 1
    assert got == above / total


def test_classify_regime_witness(grid33, nodes33, big_cyl):
    X, Y = nodes33
    steep = const_field(grid33, X, Y, lambda x, y: 2.0 * x)
    dual = sample_dual_boundary(ball(1.0), 16)
    res = classify_regime(steep, big_cyl, 0.2, 0.5, 0.25, dual)
    assert not res.degenerate
    assert res.label == "non_degenerate"
    assert res.witness_angle == 0.0
    assert res.witness_point == (1.0, 0.0)
    assert res.fractions.shape == (16,)
    assert res.fractions[0] == 1.0


def test_classify_regime_degenerate(grid33, nodes33, big_cyl):
    X, Y = nodes33
    flat = const_field(grid33, X, Y, lambda x, y: 0.3 * x + 0.4 * y)
    dual = sample_dual_boundary(ball(1.0), 16)
    res = classify_regime(flat, big_cyl, 0.2, 0.5, 0.25, dual)
    assert res.degenerate
    assert res.witness_angle is None and res.witness_point is None
    assert np.all(res.fractions == 0.0)


def test_classify_regime_validation(grid33, nodes33, big_cyl):
    X, Y = nodes33
    fld = const_field(grid33, X, Y, lambda x, y: x)
    dual = sample_dual_boundary(ball(1.0), 8)
    with pytest.raises(ValueError):
        classify_regime(fld, big_cyl, 0.2, 0.0, 0.25, dual)
    with pytest.raises(ValueError):
        classify_regime(fld, big_cyl, 0.2, 0.5, 0.3, dual)


def test_modulus_quadratic_time_ramp(grid33, nodes33):
    # field (2+t) X: spatial oscillation of the truncated gradient is zero
    # and the temporal oscillation is linear in the gap, so against the
    # parabolic lag sqrt(gap) the fitted exponent is 2 and the fit is exact
    X, Y = nodes33
    times = np.array([0.0, 0.02, 0.0208, 0.1])
    fld = GridField(grid33, times,
                    np.stack([(2.0 + t) * X for t in times]))
    gmap = GDeltaMap(ball(1.0), 0.2)
    gaps = [times[j] - times[i] for i in range(4) for j in range(i + 1, 4)]
    lags = np.sort(np.sqrt(np.array(gaps)))
    cyl = Cylinder(0.5, 0.5, 0.1, float(np.sqrt(0.1)))
    fit = continuity_modulus(fld, gmap, cyl, lags=lags)
    assert not fit.exact
    assert fit.osc == pytest.approx(np.sort(gaps), abs=1e-13)
    assert fit.exponent == pytest.approx(2.0, abs=1e-11)
    assert fit.r2 == 1.0


def test_modulus_exact_sentinel(grid33, nodes33):
    # gradient strictly inside the body: the truncation kills everything
    X, Y = nodes33
    times = np.array([0.0, 0.02, 0.0208, 0.1])
    fld = GridField(grid33, times, np.stack([0.3 * X for _ in times]))
    gmap = GDeltaMap(ball(1.0), 0.2)
    cyl = Cylinder(0.5, 0.5, 0.1, float(np.sqrt(0.1)))
    fit = continuity_modulus(fld, gmap, cyl)
    assert fit.exact
    assert fit.constant == 0.0 and fit.r2 == 1.0
    assert np.isnan(fit.exponent)
    assert np.all(fit.osc == 0.0)


def test_modulus_lag_validation(grid33, nodes33):
    X, Y = nodes33
    times = np.array([0.0, 0.02, 0.0208, 0.1])
    fld = GridField(grid33, times,
                    np.stack([(2.0 + t) * X for t in times]))
    gmap = GDeltaMap(ball(1.0), 0.2)
    cyl = Cylinder(0.5, 0.5, 0.1, float(np.sqrt(0.1)))
    with pytest.raises(ValueError):
        continuity_modulus(fld, gmap, cyl, lags=[0.1, 0.2])
    with pytest.raises(ValueError):
        continuity_modulus(fld, gmap, cyl, lags=[0.1, 0.2, 0.4])


def test_default_lags_structure():
    lags = default_lags(1.0)
    assert lags[-1] == pytest.approx(1.0, abs=0.0)
    assert np.all(np.diff(lags) > 0)
    ratios = lags[1:] / lags[:-1]
    assert ratios == pytest.approx(np.sqrt(2.0), rel=1e-12)
    assert lags[-1] / lags[0] >= 10.0
    with pytest.raises(ValueError):
        default_lags(0.0)


def test_geometric_convergence_halving_oracle():
    # C=1, b=2, kappa=1: threshold 0.5 and Y_i = 2^{-i-1} exactly
    res = geometric_convergence(1.0, 2.0, 1.0, 0.5)
    assert res.status == "converged"
    assert res.threshold == 0.5
    want = [0.5, 0.25, 0.125, 0.0625]
    assert res.iterates[:4].tolist() == want
    assert np.all(np.diff(res.iterates) < 0)
    assert res.iterates[-1] < 1e-12


def test_geometric_convergence_rejects_above_threshold():
    res = geometric_convergence(1.0, 2.0, 1.0, 0.6)
    assert res.status == "threshold_violated"
    assert res.iterates.tolist() == [0.6]


def test_geometric_convergence_zero_seed():
    res = geometric_convergence(1.0, 2.0, 1.0, 0.0)
    assert res.status == "converged"
    assert np.all(res.iterates == 0.0)


def test_geometric_convergence_validation():
    with pytest.raises(ValueError):
        geometric_convergence(-1.0, 2.0, 1.0, 0.1)
    with pytest.raises(ValueError):
        geometric_convergence(1.0, 1.0, 1.0, 0.1)
    with pytest.raises(ValueError):
        geometric_convergence(1.0, 2.0, 0.0, 0.1)
    with pytest.raises(ValueError):
        geometric_convergence(1.0, 2.0, 1.0, -0.1)


ABS_RHO = np.round(np.arange(1.0, 1.95, 0.1), 10)
ABS_PHI = 1.0 / (2.0 - ABS_RHO)


def test_absorption_certificate_holds():
    cert = absorption_iteration(ABS_RHO, ABS_PHI, eta=0.5, A=0.1, B=0.0,
                                C=0.0, alpha=2.0, beta=1.0)
    assert cert.hypothesis_ok and cert.failing_pair is None
    # closed form: lam = eta^{1/(2 alpha)}, c =
    # (1-lam)^-alpha / (1 - eta lam^-alpha)
    lam = 0.5 ** 0.25
    want_c = (1 - lam) ** -2 / (1 - 0.5 / lam ** 2)
    assert cert.c_tilde == pytest.approx(want_c, rel=1e-12)
    assert cert.c_tilde == pytest.approx(134.874781, abs=1e-5)
    assert cert.span == pytest.approx(0.9, abs=1e-12)
    assert cert.bound == pytest.approx(want_c * 0.1 / 0.9 ** 2, rel=1e-12)
    assert cert.dominates_samples  # phi(1.0) = 1 <= 16.65


def test_absorption_detects_violation():
    # A=0.01 is too small: at the pair (1.0, 1.2),
    # 1 > 0.5 * 1.25 + 0.01 / 0.2^2 = 0.875
    cert = absorption_iteration(ABS_RHO, ABS_PHI, eta=0.5, A=0.01, B=0.0,
                                C=0.0, alpha=2.0, beta=1.0)
    assert not cert.hypothesis_ok
    assert cert.failing_pair == pytest.approx((1.0, 1.2), abs=1e-12)
    assert not cert.dominates_samples


def test_absorption_validation():
    with pytest.raises(ValueError):
        absorption_iteration(ABS_RHO, ABS_PHI, 1.0, 0.1, 0.0, 0.0, 2.0, 1.0)
    with pytest.raises(ValueError):
        absorption_iteration(ABS_RHO, ABS_PHI, 0.5, 0.1, 0.0, 0.0, 1.0, 2.0)
    with pytest.raises(ValueError):
        absorption_iteration(ABS_RHO[::-1], ABS_PHI, 0.5, 0.1, 0.0, 0.0,
                             2.0, 1.0)
    with pytest.raises(ValueError):
        absorption_iteration(ABS_RHO, -ABS_PHI, 0.5, 0.1, 0.0, 0.0, 2.0, 1.0)


def _slope_fields(grid, X, slopes):
    times = np.linspace(0.0, 0.1, 3)
    return {
        eps: GridField(grid, times, np.stack([c * X for _ in times]))
        for eps, c in slopes.items()
    }


def test_eps_table_identical_fields(grid33, nodes33):
    X, _ = nodes33
    sols = _slope_fields(grid33, X, {1.0: 5.0, 0.3: 5.0, 0.1: 5.0})
    table = eps_convergence_table(sols, GDeltaMap(ball(1.0), 0.2))
    assert table.eps == [1.0, 0.3, 0.1]
    assert table.distances == [0.0, 0.0, 0.0]
    assert table.monotone and table.offending is None


def test_eps_table_decreasing(grid33, nodes33):
    X, _ = nodes33
    sols = _slope_fields(grid33, X, {1.0: 5.8, 0.3: 5.3, 0.1: 5.0})
    table = eps_convergence_table(sols, GDeltaMap(ball(1.0), 0.2))
    d = table.distances
    assert d[0] > d[1] > d[2] == 0.0
    # truncated slopes differ by exactly the slope gaps: ratio is 0.8 / 0.3
    assert d[0] / d[1] == pytest.approx(0.8 / 0.3, rel=1e-12)
    assert table.monotone


def test_eps_table_flags_increase(grid33, nodes33):
    X, _ = nodes33
    sols = _slope_fields(grid33, X, {1.0: 5.05, 0.3: 5.5, 0.1: 5.0})
    table = eps_convergence_table(sols, GDeltaMap(ball(1.0), 0.2))
    assert not table.monotone
    assert table.offending == (1.0, 0.3)


def test_eps_table_validation(grid33, nodes33):
    X, _ = nodes33
    gmap = GDeltaMap(ball(1.0), 0.2)
    with pytest.raises(ValueError):
        eps_convergence_table(_slope_fields(grid33, X, {1.0: 5.0, 0.1: 5.0}),
                              gmap)
    sols = _slope_fields(grid33, X, {1.0: 5.0, 0.3: 5.0, 0.1: 5.0})
    other = Grid(0.0, 1.0, 0.0, 1.0, 17, 17)
    Xo, _ = other.nodes()
    sols[0.3] = GridField(other, np.linspace(0.0, 0.1, 3),
                          np.stack([5.0 * Xo for _ in range(3)]))
    with pytest.raises(ValueError):
        eps_convergence_table(sols, gmap)


def test_energy_csv_format(tmp_path):
    path = tmp_path / "energy.csv"
    write_energy_csv(path, [(0, 0.0, 1.5, 0.25, 0), (1, 0.1, 1.25, 0.2, 3)],
                     "deadbeef")
    lines = path.read_text().splitlines()
    assert lines[0] == "# config_hash=deadbeef"
    assert lines[1] == "step,t,energy,sup_norm,newton_iters"
    assert lines[2].split(",")[0] == "0"
    assert lines[2].split(",")[2] == "1.5"
