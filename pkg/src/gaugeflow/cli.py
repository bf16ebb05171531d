"""Config-driven batch runner.

Subcommands: verify (property suites), solve (eps-sweep + analysis),
analyze (re-run analysis on existing checkpoints), report (merge summaries).
All outputs are deterministic for a fixed config and seed: CSV numerics are
written with 17 significant digits and every table carries the config hash.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__, _kernels
from . import analysis as ana
from . import checks
from .bodies import radii, sample_dual_boundary
from .config import ConfigError, ExperimentConfig
from .gmaps import GDeltaMap
from .grid import GridField, cell_gradients
from .integrand import build_regularized
from .solver import SolverError, solve


def _eps_label(eps: float) -> str:
    return "eps_" + ("%g" % eps).replace(".", "p").replace("-", "m")


def _load_config(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.load(args.config)
    else:
        cfg = ExperimentConfig.defaults()
    if getattr(args, "seed", None) is not None:
        tree = cfg.to_dict()
        tree["seed"] = args.seed
        cfg = ExperimentConfig.from_dict(tree)
    return cfg


def _bootstrap_gradient_bound(cfg: ExperimentConfig) -> float:
    """Coarse pre-solve at the largest lift, inflated 2x.

    The working-range bound of the regularization chain normally comes from
    the config; without one we estimate the reachable sup |D_h u| on a
    half-resolution grid at eps = 1 and double it.  Reported as a bootstrap,
    not a certified bound.
    """
    tree = cfg.to_dict()
    tree["grid"]["nx"] = max(16, cfg.nx // 2)
    tree["grid"]["ny"] = max(16, cfg.ny // 2)
    coarse = ExperimentConfig.from_dict(tree)
    grid = coarse.build_grid()
    spec = coarse.build_spec()
    initial, boundary, source = coarse.data_functions()
    X, Y = grid.nodes()
    u0 = initial(X, Y)
    gx, gy = cell_gradients(grid, u0)
    k_pre = 2.0 * max(1.0, float(np.sqrt(gx * gx + gy * gy).max()))
    reg = build_regularized(spec, k_pre, 1.0, sweep_seed=cfg.seed)
    nt = max(2, min(6, coarse.time_levels().shape[0]))
    times = np.linspace(0.0, coarse.horizon, nt)
    # sup-norm Newton floors near 2e-9 are reachable close to the degeneracy
    # boundary; the doubled sup below does not need more than 1e-8
    result = solve(grid, times, u0, reg, source, boundary,
                   newton_tol=max(coarse.newton_tol, 1e-8))
    sup = 0.0
    for k in range(times.shape[0]):
        gx, gy = cell_gradients(grid, result.field.values[k])
        sup = max(sup, float(np.sqrt(gx * gx + gy * gy).max()))
    return 2.0 * max(sup, 1e-6)


def _chain_constants(reg) -> dict:
    return {
        "k_tilde": reg.k_tilde,
        "trunc_level": reg.trunc_level,
        "c_psi": reg.c_psi,
        "c_f": reg.c_f,
        "n_radius": reg.n_radius,
        "phi_r0": reg.phi_r0,
        "phi_ell": reg.phi_ell,
        "phi_kappa": reg.phi_kappa,
        "phi_cap_exceeded": reg.phi_cap_exceeded,
        "min_eig_sweep": reg.min_eig_sweep,
        "quad_growth": reg.quad_growth,
        "epsilon": reg.epsilon,
    }


def _solve_one(payload: tuple):
    cfg_dict, eps, out_dir, k_eff = payload
    cfg = ExperimentConfig.from_dict(cfg_dict)
    grid = cfg.build_grid()
    spec = cfg.build_spec()
    initial, boundary, source = cfg.data_functions()
    reg = build_regularized(spec, k_eff, eps, sweep_seed=cfg.seed)
    times = cfg.time_levels()
    result = solve(grid, times, initial, reg, source, boundary,
                   newton_tol=cfg.newton_tol)
    os.makedirs(out_dir, exist_ok=True)
    ckpt = os.path.join(out_dir, "field.npz")
    result.field.save(ckpt)
    result.field.snapshot_csv(os.path.join(out_dir, "final_state.csv"),
                              times.shape[0] - 1)
    return eps, result.energy_rows(), _chain_constants(reg), ckpt


def cmd_verify(args) -> int:
    try:
        cfg = _load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    results = checks.run_all(cfg)
    os.makedirs(args.out, exist_ok=True)
    lines = []
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        lines.append(f"{status} {r.name}: {r.detail}")
    ledger = "\n".join(lines) + "\n"
    with open(os.path.join(args.out, "verify_ledger.txt"), "w") as fh:
        fh.write(ledger)
    print(ledger, end="")
    failed = sum(1 for r in results if not r.passed)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 1 if failed else 0


def cmd_solve(args) -> int:
    try:
        cfg = _load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    os.makedirs(args.out, exist_ok=True)
    chash = cfg.config_hash()
    body = cfg.build_body()
    r_e, r_o = radii(body)

    bootstrapped = cfg.gradient_bound is None
    try:
        k_eff = _bootstrap_gradient_bound(cfg) if bootstrapped \
            else float(cfg.gradient_bound)
    except SolverError as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return 3

    payloads = [
        (cfg.to_dict(), eps, os.path.join(args.out, _eps_label(eps)), k_eff)
        for eps in cfg.epsilons
    ]
    outcomes = {}
    try:
        if args.threads > 1:
            with ProcessPoolExecutor(max_workers=args.threads) as pool:
                for eps, rows, consts, ckpt in pool.map(_solve_one, payloads):
                    outcomes[eps] = (rows, consts, ckpt)
        else:
            for payload in payloads:
                eps, rows, consts, ckpt = _solve_one(payload)
                outcomes[eps] = (rows, consts, ckpt)
    except SolverError as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return 3

    report = ana.ExperimentReport(config_hash=chash)
    report.constants = {
        "r_E": r_e,
        "R_E": r_o,
        "gradient_bound": k_eff,
        "gradient_bound_bootstrapped": bootstrapped,
        "chain": {_eps_label(e): outcomes[e][1] for e in cfg.epsilons},
        "gmap_bounds": {
            "%g" % d: {
                "forward": GDeltaMap(body, d).forward_lipschitz_bound(),
                "inverse": GDeltaMap(body, d).inverse_lipschitz_bound(),
            }
            for d in cfg.deltas
        },
    }
    report.metadata = {
        "backend": _kernels.BACKEND,
        "version": __version__,
        "seed": cfg.seed,
    }

    fields = {}
    for eps in cfg.epsilons:
        rows, consts, ckpt = outcomes[eps]
        label = _eps_label(eps)
        report.energy_tables[label] = [list(r) for r in rows]
        ana.write_energy_csv(os.path.join(args.out, label, "energy.csv"),
                             rows, chash)
        fields[eps] = GridField.load(ckpt)

    _run_analysis(cfg, body, fields, args.out, chash, report)
    report.write_json(os.path.join(args.out, "summary.json"))
    print(f"solved {len(cfg.epsilons)} eps levels -> {args.out}")
    print(f"epsconv monotone: {report.verdicts.get('epsconv_monotone')}")
    return 0


def _run_analysis(cfg: ExperimentConfig, body, fields: dict, out: str,
                  chash: str, report: ana.ExperimentReport) -> None:
    dual = sample_dual_boundary(body, cfg.dual_count)
    cyls = [ana.Cylinder(c["x0"], c["y0"], c["t0"], c["rho"])
            for c in cfg.cylinders]

    for eps in cfg.epsilons:
        fld = fields[eps]
        label = _eps_label(eps)
        excess_rows = []
        regime_rows = []
        for ci, cyl in enumerate(cyls):
            excess_rows.append((cyl.x0, cyl.y0, cyl.t0, cyl.rho,
                                ana.excess(fld, cyl)))
            for d in cfg.deltas:
                res = ana.classify_regime(fld, cyl, d, cfg.mu, cfg.nu, dual)
                regime_rows.append(
                    (ci, d, cfg.mu, cfg.nu, res.label,
                     res.witness_angle if res.witness_angle is not None
                     else "")
                )
        ana.write_excess_csv(os.path.join(out, label, "excess.csv"),
                             excess_rows, chash)
        ana.write_regime_csv(os.path.join(out, label, "regime.csv"),
                             regime_rows, chash)
        report.excess_rows.extend([[label] + list(r) for r in excess_rows])
        report.regime_rows.extend([[label] + list(r) for r in regime_rows])

    # continuity modulus on the first cylinder, per (delta, eps)
    modulus_rows = []
    for d in cfg.deltas:
        gmap = GDeltaMap(body, d)
        for eps in cfg.epsilons:
            fit = ana.continuity_modulus(fields[eps], gmap, cyls[0])
            expo = "exact" if fit.exact else fit.exponent
            for lag, osc in zip(fit.lags, fit.osc):
                modulus_rows.append((d, eps, lag, osc, expo, fit.r2))
    ana.write_modulus_csv(os.path.join(out, "modulus.csv"), modulus_rows,
                          chash)
    report.modulus_rows = [list(r) for r in modulus_rows]

    if len(cfg.epsilons) >= 3:
        gmap = GDeltaMap(body, cfg.deltas[0])
        table = ana.eps_convergence_table(fields, gmap)
        rows = list(zip(table.eps, table.distances))
        ana.write_epsconv_csv(os.path.join(out, "epsconv.csv"), rows, chash)
        report.epsconv_rows = [list(r) for r in rows]
        report.verdicts["epsconv_monotone"] = table.monotone
        if table.offending is not None:
            report.verdicts["epsconv_offending"] = list(table.offending)


def cmd_analyze(args) -> int:
    try:
        cfg = _load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    chash = cfg.config_hash()
    body = cfg.build_body()
    fields = {}
    for eps in cfg.epsilons:
        ckpt = os.path.join(args.out, _eps_label(eps), "field.npz")
        if not os.path.exists(ckpt):
            print(f"missing checkpoint {ckpt}", file=sys.stderr)
            return 2
        fields[eps] = GridField.load(ckpt)
    report = ana.ExperimentReport(config_hash=chash)
    report.metadata = {"backend": _kernels.BACKEND, "version": __version__,
                       "seed": cfg.seed}
    _run_analysis(cfg, body, fields, args.out, chash, report)
    report.write_json(os.path.join(args.out, "analysis_summary.json"))
    print(f"analysis rewritten under {args.out}")
    return 0


def cmd_report(args) -> int:
    merged = {"reports": [], "config_hashes": [], "all_verdicts_true": True}
    for path in args.paths:
        with open(path) as fh:
            doc = json.load(fh)
        merged["reports"].append(doc)
        merged["config_hashes"].append(doc.get("config_hash"))
        for v in doc.get("verdicts", {}).values():
            if v is False:
                merged["all_verdicts_true"] = False
    out_path = args.out if args.out.endswith(".json") \
        else os.path.join(args.out, "merged_report.json")
    out_dir = os.path.dirname(out_path)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    with open(out_path, "w") as fh:
        json.dump(merged, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"merged {len(args.paths)} reports -> {out_path}")
    return 0


def _add_common(sub, threads: bool = False):
    sub.add_argument("--config", default=None, help="config JSON path")
    sub.add_argument("--out", default="out", help="output directory")
    sub.add_argument("--seed", type=int, default=None,
                     help="override the config seed")
    if threads:
        sub.add_argument("--threads", type=int, default=1,
                         help="worker processes for the eps sweep")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gaugeflow",
        description="Numerical laboratory for gauge-degenerate parabolic "
                    "gradient flows",
    )
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    p_verify = subs.add_parser("verify", help="run the property suites")
    _add_common(p_verify)
    p_verify.set_defaults(fn=cmd_verify)

    p_solve = subs.add_parser("solve", help="run the eps sweep and analysis")
    _add_common(p_solve, threads=True)
    p_solve.set_defaults(fn=cmd_solve)

    p_analyze = subs.add_parser("analyze",
                                help="re-run analysis on checkpoints")
    _add_common(p_analyze)
    p_analyze.set_defaults(fn=cmd_analyze)

    p_report = subs.add_parser("report", help="merge summary documents")
    p_report.add_argument("paths", nargs="+", help="summary.json files")
    p_report.add_argument("--out", default="merged_report.json")
    p_report.set_defaults(fn=cmd_report)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
