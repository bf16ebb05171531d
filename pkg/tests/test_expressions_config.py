"""Expression grammar and experiment configuration round-trips."""

import json

import numpy as np
import pytest

from gaugeflow.config import ConfigError, ExperimentConfig
from gaugeflow.expressions import ExpressionError, compile_expression


# -- expressions ------------------------------------------------------------


def test_expression_arithmetic_and_broadcast():
    f = compile_expression("1 + 0.5*x - y*t")
    assert f(2.0, 1.0, 0.5) == pytest.approx(1.5)
    X = np.linspace(0, 1, 5)
    out = f(X, 0.0, 0.0)
    assert out.shape == (5,)
    assert out == pytest.approx(1.0 + 0.5 * X)


def test_expression_caret_is_power():
    assert compile_expression("x^2")(3.0, 0.0, 0.0) == pytest.approx(9.0)
    # caret keeps Python's xor precedence, binding looser than +
    assert compile_expression("x^2 + 1")(2.0, 0.0, 0.0) == pytest.approx(8.0)
    assert compile_expression("x**2 + 1")(2.0, 0.0, 0.0) == pytest.approx(5.0)


def test_expression_functions_and_constants():
    f = compile_expression("sin(pi*x) + exp(0*y) + abs(-t)")
    assert f(0.5, 3.0, -2.0) == pytest.approx(1.0 + 1.0 + 2.0)
    g = compile_expression("max(x, y, 0.5) + min(x, y)")
    assert g(0.2, 0.9, 0.0) == pytest.approx(0.9 + 0.2)


def test_expression_used_names():
    assert compile_expression("1 + 0").names == set()
    assert compile_expression("x*x").names == {"x"}
    assert compile_expression("sin(x) + t*y").names == {"x", "y", "t"}
    # pi is a constant, not a variable
    assert compile_expression("pi").names == set()


@pytest.mark.parametrize("bad", [
    "import os",
    "__class__",
    "x[0]",
    "lambda: 1",
    "foo(x)",
    "sin(x, y)",
    "max(x)",
    "x % 2",
    "x < 1",
    "'str'",
    "min(x, y, key=abs)",
])
def test_expression_rejections(bad):
    with pytest.raises(ExpressionError):
        compile_expression(bad)


def test_expression_error_points_at_offender():
    with pytest.raises(ExpressionError, match="column"):
        compile_expression("x + foo(y)")


# -- config -----------------------------------------------------------------


def test_defaults_parse_and_build(default_cfg):
    assert default_cfg.p == 2.0
    assert default_cfg.nx == 32 and default_cfg.ny == 32
    body = default_cfg.build_body()
    assert body.r_inner == pytest.approx(1.0)
    grid = default_cfg.build_grid()
    assert grid.nx == 32
    spec = default_cfg.build_spec()
    assert spec.c1 == 0.5 and spec.c2 == 2.0


def test_time_levels_snap_to_horizon(default_cfg):
    times = default_cfg.time_levels()
    assert times[0] == 0.0
    assert times[-1] == pytest.approx(default_cfg.horizon, abs=0.0)
    assert np.allclose(np.diff(times), times[1] - times[0])
    # dt that does not divide the horizon still produces a uniform cover
    cfg = ExperimentConfig.from_dict({"time": {"dt": 0.003, "horizon": 0.05}})
    times = cfg.time_levels()
    assert times[-1] == pytest.approx(0.05, abs=0.0)
    assert len(times) == 18  # round(0.05 / 0.003) = 17 steps


def test_round_trip_and_hash_stability(tmp_path, default_cfg):
    path = tmp_path / "cfg.json"
    default_cfg.save(path)
    again = ExperimentConfig.load(path)
    assert again == default_cfg
    assert again.config_hash() == default_cfg.config_hash()
    assert len(default_cfg.config_hash()) == 64


def test_hash_changes_with_content(default_cfg):
    other = ExperimentConfig.from_dict({"seed": 43})
    assert other.config_hash() != default_cfg.config_hash()


def test_canonical_json_is_key_sorted(default_cfg):
    doc = json.loads(default_cfg.canonical_json())
    assert list(doc) == sorted(doc)


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown"):
        ExperimentConfig.from_dict({"grdi": {"nx": 32}})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"grid": {"nxx": 32}})


@pytest.mark.parametrize("patch,frag", [
    ({"integrand": {"p": 1.0}}, "exceed 1"),
    ({"integrand": {"c1": 3.0}}, "c1"),
    ({"grid": {"nx": 8}}, "16"),
    ({"grid": {"rect": [0, 0, 0, 1]}}, "rect"),
    ({"time": {"dt": -0.1}}, "dt"),
    ({"time": {"horizon": 0.001}}, "horizon"),
    ({"epsilons": [1.5]}, "epsilons"),
    ({"epsilons": [0.1, 0.1]}, "distinct"),
    ({"epsilons": []}, "nonempty"),
    ({"deltas": [0.0]}, "deltas"),
    ({"source": "sinh(x)"}, "source"),
    ({"newton_tol": 0.0}, "newton_tol"),
    ({"analysis": {"cylinders": [
        {"x0": 0.5, "y0": 0.5, "t0": 0.05, "rho": 0.9}]}, }, "leaves"),
    ({"analysis": {"cylinders": [
        {"x0": 0.5, "y0": 0.5, "t0": 0.5, "rho": 0.2}]}, }, "time window"),
    ({"analysis": {"nu": 0.5}}, "nu"),
    ({"analysis": {"dual_count": 2}}, "dual_count"),
    ({"body": {"kind": "cube"}}, "kind"),
])
def test_config_rejections(patch, frag):
    with pytest.raises(ConfigError, match=frag):
        ExperimentConfig.from_dict(patch)


def test_config_rejects_degenerate_polytope():
    with pytest.raises((ConfigError, ValueError)):
        ExperimentConfig.from_dict(
            {"body": {"kind": "polytope",
                      "vertices": [[1.0, 0.0], [-1.0, 0.0]]}})


def test_coeff_bound_spot_check():
    with pytest.raises(ConfigError, match="leave"):
        cfg = ExperimentConfig.from_dict({"integrand": {"coeff": "3 + 0*x"}})
        cfg.build_spec()


def test_data_functions_zero_source(default_cfg):
    initial, boundary, source = default_cfg.data_functions()
    assert source is None  # "0" means no source term, not a zero callable
    X, Y = np.meshgrid(np.linspace(0, 1, 5), np.linspace(0, 1, 5),
                       indexing="ij")
    u0 = initial(X, Y)
    assert u0.shape == (5, 5)
    assert np.array_equal(u0, np.asarray(boundary(X, Y, 0.0)))


def test_data_functions_nonzero_source():
    cfg = ExperimentConfig.from_dict({"source": "x + t"})
    _, _, source = cfg.data_functions()
    assert source is not None
    assert float(source(0.25, 0.0, 0.5)) == pytest.approx(0.75)


def test_load_reports_json_position(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"seed": 1,}\n')
    with pytest.raises(ConfigError, match="line"):
        ExperimentConfig.load(path)
