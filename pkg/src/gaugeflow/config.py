"""Experiment configuration: defaults, validation, canonical hashing.

Configs are JSON trees.  Parsing merges user values over the defaults,
rejects unknown keys, validates every range the modules rely on, and
produces a frozen object whose canonical serialization round-trips and
hashes deterministically.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import bodies
from .expressions import ExpressionError, compile_expression
from .grid import Grid

DEFAULTS = {
    "body": {"kind": "ball", "radius": 1.0},
    "integrand": {"p": 2.0, "coeff": "1", "c1": 0.5, "c2": 2.0},
    "grid": {"nx": 32, "ny": 32, "rect": [0.0, 1.0, 0.0, 1.0]},
    "time": {"dt": 0.005, "horizon": 0.05},
    "epsilons": [1.0, 0.3, 0.1],
    "deltas": [0.25],
    "source": "0",
    "data": "1.5*sin(pi*x)*sin(pi*y) + 0.1*x",
    "gradient_bound": None,
    "newton_tol": 1e-10,
    "analysis": {
        "cylinders": [{"x0": 0.5, "y0": 0.5, "t0": 0.05, "rho": 0.2}],
        "lag_decades": 1.0,
        "dual_count": 64,
        "mu": 0.5,
        "nu": 0.25,
    },
    "seed": 42,
}


class ConfigError(ValueError):
    pass


def _merge(defaults, user, path=""):
    if isinstance(defaults, dict):
        if not isinstance(user, dict):
            raise ConfigError(f"{path or 'config'}: expected an object")
        out = {}
        for key in user:
            if key not in defaults:
                raise ConfigError(f"{path or 'config'}: unknown key {key!r}")
        for key, dval in defaults.items():
            if key in user:
                # whole-value replacement for lists and the body subtree
                # (its shape depends on the kind tag)
                if isinstance(dval, dict) and key not in ("body",):
                    out[key] = _merge(dval, user[key], f"{path}{key}.")
                else:
                    out[key] = user[key]
            else:
                out[key] = dval
        return out
    return user


@dataclass(frozen=True)
class ExperimentConfig:
    body: dict
    p: float
    coeff: str
    c1: float
    c2: float
    nx: int
    ny: int
    rect: tuple
    dt: float
    horizon: float
    epsilons: tuple
    deltas: tuple
    source: str
    data: str
    gradient_bound: Optional[float]
    newton_tol: float
    cylinders: tuple
    lag_decades: float
    dual_count: int
    mu: float
    nu: float
    seed: int

    @classmethod
    def from_dict(cls, user: dict) -> "ExperimentConfig":
        tree = _merge(DEFAULTS, user or {})
        body = dict(tree["body"])
        integ = tree["integrand"]
        gridc = tree["grid"]
        timec = tree["time"]
        ana = tree["analysis"]

        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        p = float(integ["p"])
        need(p > 1.0, f"integrand.p: must exceed 1, got {p}")
        c1, c2 = float(integ["c1"]), float(integ["c2"])
        need(0 < c1 <= c2, f"integrand: need 0 < c1 <= c2, got ({c1}, {c2})")

        nx, ny = int(gridc["nx"]), int(gridc["ny"])
        need(nx >= 16 and ny >= 16, f"grid: need at least 16x16, got {nx}x{ny}")
        rect = tuple(float(v) for v in gridc["rect"])
        need(len(rect) == 4 and rect[0] < rect[1] and rect[2] < rect[3],
             "grid.rect: expected [x0, x1, y0, y1] with positive extent")

        dt = float(timec["dt"])
        horizon = float(timec["horizon"])
        need(dt > 0, "time.dt: must be positive")
        need(horizon >= dt, "time.horizon: must cover at least one step")

        eps = tuple(float(v) for v in tree["epsilons"])
        need(len(eps) > 0, "epsilons: list must be nonempty")
        for v in eps:
            need(0 < v <= 1, f"epsilons: values must lie in (0, 1], got {v}")
        need(len(set(eps)) == len(eps), "epsilons: values must be distinct")
        dels = tuple(float(v) for v in tree["deltas"])
        need(len(dels) > 0, "deltas: list must be nonempty")
        for v in dels:
            need(0 < v <= 1, f"deltas: values must lie in (0, 1], got {v}")

        for fieldname in ("coeff", "source", "data"):
            text = integ["coeff"] if fieldname == "coeff" else tree[fieldname]
            try:
                compile_expression(str(text))
            except ExpressionError as exc:
                raise ConfigError(f"{fieldname}: {exc}") from exc

        gb = tree["gradient_bound"]
        if gb is not None:
            gb = float(gb)
            need(gb >= 0, "gradient_bound: must be nonnegative when given")
        ntol = float(tree["newton_tol"])
        need(ntol > 0, "newton_tol: must be positive")

        cyls = tuple(
            {k: float(c[k]) for k in ("x0", "y0", "t0", "rho")}
            for c in ana["cylinders"]
        )
        need(len(cyls) > 0, "analysis.cylinders: list must be nonempty")
        for i, c in enumerate(cyls):
            need(c["rho"] > 0, f"analysis.cylinders[{i}]: rho must be positive")
            need(rect[0] <= c["x0"] - c["rho"] and c["x0"] + c["rho"] <= rect[1]
                 and rect[2] <= c["y0"] - c["rho"]
                 and c["y0"] + c["rho"] <= rect[3],
                 f"analysis.cylinders[{i}]: ball leaves the grid rectangle")
            need(c["t0"] <= horizon + 1e-12
                 and c["t0"] - c["rho"] ** 2 >= -1e-12,
                 f"analysis.cylinders[{i}]: time window leaves [0, horizon]")
        need(int(ana["dual_count"]) >= 4, "analysis.dual_count: need >= 4")
        need(float(ana["mu"]) > 0, "analysis.mu: must be positive")
        need(0 < float(ana["nu"]) <= 0.25, "analysis.nu: must lie in (0, 1/4]")
        need(float(ana["lag_decades"]) > 0,
             "analysis.lag_decades: must be positive")

        cfg = cls(
            body=body, p=p, coeff=str(integ["coeff"]), c1=c1, c2=c2,
            nx=nx, ny=ny, rect=rect, dt=dt, horizon=horizon,
            epsilons=eps, deltas=dels, source=str(tree["source"]),
            data=str(tree["data"]), gradient_bound=gb, newton_tol=ntol,
            cylinders=cyls, lag_decades=float(ana["lag_decades"]),
            dual_count=int(ana["dual_count"]), mu=float(ana["mu"]),
            nu=float(ana["nu"]), seed=int(tree["seed"]),
        )
        cfg.build_body()  # reject invalid bodies at parse time
        return cfg

    @classmethod
    def defaults(cls) -> "ExperimentConfig":
        return cls.from_dict({})

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            try:
                tree = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(
                    f"{path}: invalid JSON at line {exc.lineno}, "
                    f"column {exc.colno}: {exc.msg}"
                ) from exc
        return cls.from_dict(tree)

    def to_dict(self) -> dict:
        return {
            "body": dict(self.body),
            "integrand": {"p": self.p, "coeff": self.coeff,
                          "c1": self.c1, "c2": self.c2},
            "grid": {"nx": self.nx, "ny": self.ny, "rect": list(self.rect)},
            "time": {"dt": self.dt, "horizon": self.horizon},
            "epsilons": list(self.epsilons),
            "deltas": list(self.deltas),
            "source": self.source,
            "data": self.data,
            "gradient_bound": self.gradient_bound,
            "newton_tol": self.newton_tol,
            "analysis": {
                "cylinders": [dict(c) for c in self.cylinders],
                "lag_decades": self.lag_decades,
                "dual_count": self.dual_count,
                "mu": self.mu,
                "nu": self.nu,
            },
            "seed": self.seed,
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True,
                          separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def build_body(self) -> bodies.ConvexBody:
        kind = self.body.get("kind")
        if kind == "ball":
            return bodies.ball(float(self.body.get("radius", 1.0)))
        if kind == "ellipsoid":
            return bodies.ellipsoid(np.asarray(self.body["matrix"], dtype=float))
        if kind == "polytope":
            return bodies.polytope(np.asarray(self.body["vertices"],
                                              dtype=float))
        raise ConfigError(f"body.kind: unknown kind {kind!r}")

    def build_grid(self) -> Grid:
        return Grid(self.rect[0], self.rect[1], self.rect[2], self.rect[3],
                    self.nx, self.ny)

    def time_levels(self) -> np.ndarray:
        """Uniform levels covering [0, horizon]; dt is snapped to divide it."""
        nt = max(1, int(round(self.horizon / self.dt)))
        return np.linspace(0.0, self.horizon, nt + 1)

    def build_spec(self) -> "IntegrandSpec":
        from .integrand import IntegrandSpec
        body = self.build_body()
        coeff = compile_expression(self.coeff)
        # spot-check the declared coefficient bounds on a coarse space-time grid
        xs = np.linspace(self.rect[0], self.rect[1], 9)
        ys = np.linspace(self.rect[2], self.rect[3], 9)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        for t in (0.0, 0.5 * self.horizon, self.horizon):
            a = np.broadcast_to(coeff(X, Y, t), X.shape)
            if np.any(a < self.c1 - 1e-9) or np.any(a > self.c2 + 1e-9):
                raise ConfigError(
                    "integrand.coeff: sampled values leave [c1, c2] "
                    f"at t={t}: range [{a.min()}, {a.max()}]"
                )
        return IntegrandSpec(body=body, p=self.p, coeff=coeff, c1=self.c1,
                             c2=self.c2, coeff_src=self.coeff)

    def data_functions(self):
        """(initial(X, Y), boundary(X, Y, t), source(X, Y, t) or None)."""
        data = compile_expression(self.data)
        source: Optional[object]
        if self.source.strip() == "0":
            source = None
        else:
            source = compile_expression(self.source)

        def initial(X, Y):
            return np.broadcast_to(data(X, Y, 0.0),
                                   np.broadcast(X, Y).shape).copy()

        return initial, data, source
