"""Benchmark: compiled stencil kernels vs the NumPy fallback.

Times the raw kernels (the matvecs inside every conjugate-gradient loop) and
a full forward solve on a few grid sizes.  Run as::

    python benchmarks/bench_kernels.py [--sizes 32,64,128] [--steps 50]
"""

import argparse
import time

import numpy as np

from kwc.backends import numpy_backend

try:
    from kwc.backends import _stencil as compiled
except ImportError:
    compiled = None


def time_fn(fn, *args, repeat=200):
    fn(*args)  # warm up
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - t0) / repeat


def bench_kernels(nx, ny, repeat):
    rng = np.random.default_rng(0)
    v = rng.standard_normal((nx, ny))
    cfx = rng.uniform(1.0, 2.0, (nx - 1, ny))
    cfy = rng.uniform(1.0, 2.0, (nx, ny - 1))
    shift = rng.uniform(1.0, 2.0, (nx, ny))
    fx = rng.uniform(0.5, 1.5, (nx - 1, ny))
    fy = rng.uniform(0.5, 1.5, (nx, ny - 1))
    w = rng.uniform(0.5, 1.5, (nx, ny))
    out = np.empty((nx, ny))
    gx = np.empty((nx - 1, ny))
    gy = np.empty((nx, ny - 1))

    rows = []
    for name, impl in [("numpy", numpy_backend)] + ([("compiled", compiled)] if compiled else []):
        t_grad = time_fn(impl.grad_faces, v, 0.1, 0.1, gx, gy, repeat=repeat)
        t_div = time_fn(impl.div_weighted, gx, gy, 0.1, 0.1, fx, fy, w, out, repeat=repeat)
        t_diff = time_fn(impl.apply_diffusion, v, cfx, cfy, shift, 0.1, 0.1,
                         fx, fy, w, True, out, repeat=repeat)
        rows.append((name, t_grad, t_div, t_diff))
    return rows


def bench_solve(nx, steps):
    import os
    results = {}
    for name in ("numpy", "compiled"):
        if name == "compiled" and compiled is None:
            continue
        os.environ["KWC_BACKEND"] = name
        # re-import with the forced backend in a fresh interpreter state
        import importlib
        import kwc.backends
        importlib.reload(kwc.backends)
        import kwc.grid, kwc.state, kwc.model
        importlib.reload(kwc.grid)
        importlib.reload(kwc.model)
        importlib.reload(kwc.state)
        from kwc.grid import Field, Grid2D, BC
        from kwc.model import ModelParams
        from kwc.state import ControlPair, solve_state

        grid = Grid2D(nx, nx)
        X, Y = grid.xy
        eta0 = Field(grid, 0.5 * np.cos(np.pi * X) * np.cos(np.pi * Y))
        theta0 = Field.dirichlet(grid, 0.8 * np.sin(np.pi * X) * np.sin(np.pi * Y))
        params = ModelParams(eps=0.5)
        ctrl = ControlPair.zeros(grid, steps)
        t0 = time.perf_counter()
        solve_state((eta0, theta0), ctrl, params, T=0.01, M=steps)
        results[name] = time.perf_counter() - t0
    os.environ.pop("KWC_BACKEND", None)
    return results


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="32,64,128")
    ap.add_argument("--steps", type=int, default=50)
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    if compiled is None:
        print("compiled extension not available; benchmarking the fallback only")

    print(f"{'grid':>8} {'backend':>9} {'grad':>10} {'div_w':>10} {'diffusion':>10}")
    for n in sizes:
        for name, t_grad, t_div, t_diff in bench_kernels(n, n, args.repeat):
            print(f"{n:>4}x{n:<3} {name:>9} {t_grad*1e6:>8.1f}us {t_div*1e6:>8.1f}us "
                  f"{t_diff*1e6:>8.1f}us")

    print(f"\nfull forward solve, {args.steps} steps:")
    for n in sizes:
        res = bench_solve(n, args.steps)
        line = f"{n:>4}x{n:<4}"
        for name, t in res.items():
            line += f"  {name}: {t:7.3f}s"
        if len(res) == 2:
            line += f"  speedup: {res['numpy'] / res['compiled']:.2f}x"
        print(line)


if __name__ == "__main__":
    main()
