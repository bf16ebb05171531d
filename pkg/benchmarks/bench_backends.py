"""Timing comparison of the compiled and pure-NumPy cell kernels.

Runs the energy/flux and Hessian-action kernels over synthetic gradient
batches for each reference body, then times one implicit solve per backend.
Usage: python3 benchmarks/bench_backends.py [--sizes 4096,65536] [--repeat 5]
"""

import argparse
import time

import numpy as np

from gaugeflow import _kernels, build_regularized
from gaugeflow.checks import standard_bodies
from gaugeflow.config import ExperimentConfig
from gaugeflow.expressions import compile_expression
from gaugeflow.grid import Grid
from gaugeflow.integrand import IntegrandSpec
from gaugeflow.solver import solve


def _time(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(sizes, repeat: int) -> None:
    rng = np.random.default_rng(0)
    names = _kernels.available_backends()
    if "compiled" not in names:
        print("compiled extension not built; timing the numpy path only")
    print(f"{'body':<10} {'n':>8} {'kernel':<12} "
          + " ".join(f"{n:>12}" for n in names) + f" {'speedup':>9}")
    for label, body in standard_bodies().items():
        spec = IntegrandSpec(body=body, p=2.0,
                             coeff=compile_expression("1"), c1=0.5, c2=2.0)
        reg = build_regularized(spec, 4.0, 0.1)
        for n in sizes:
            gx = rng.normal(0.0, 3.0, n)
            gy = rng.normal(0.0, 3.0, n)
            a = rng.uniform(0.5, 2.0, n)
            vx = rng.normal(0.0, 1.0, n)
            vy = rng.normal(0.0, 1.0, n)
            rows = {"energy_flux": {}, "hvp": {}}
            for name in names:
                ef, hvp, _ = _kernels.get_backend(name)
                rows["energy_flux"][name] = _time(
                    lambda: ef(gx, gy, a, reg), repeat)
                rows["hvp"][name] = _time(
                    lambda: hvp(gx, gy, a, vx, vy, reg), repeat)
            for kernel, res in rows.items():
                cells = " ".join(f"{res[n2] * 1e3:>10.3f}ms" for n2 in names)
                if len(names) == 2:
                    speed = res["numpy"] / res["compiled"]
                    cells += f" {speed:>8.1f}x"
                print(f"{label:<10} {n:>8} {kernel:<12} {cells}")


def bench_solve(repeat: int) -> None:
    cfg = ExperimentConfig.defaults()
    grid = Grid(0.0, 1.0, 0.0, 1.0, 48, 48)
    times = np.linspace(0.0, 0.02, 5)
    spec = cfg.build_spec()
    initial, _, _ = cfg.data_functions()
    reg = build_regularized(spec, 8.0, 0.1)
    print(f"\nimplicit solve, 48x48 grid, {times.shape[0] - 1} steps:")
    for name in _kernels.available_backends():
        t = _time(lambda: solve(grid, times, initial, reg, backend=name),
                  repeat)
        print(f"  {name:<10} {t * 1e3:9.1f} ms")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", default="4096,65536",
                    help="comma-separated batch sizes")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]
    bench_kernels(sizes, args.repeat)
    bench_solve(max(2, args.repeat // 2))


if __name__ == "__main__":
    main()
