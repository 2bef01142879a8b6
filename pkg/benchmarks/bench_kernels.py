"""Time the compiled posterior kernel against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--draws D] [--repeat R]

Both backends see the same inputs; the script also reports the largest
absolute disagreement so a speedup never hides a numerical regression.
"""
import argparse
import time

import numpy as np

from pioracle import _kernels_py
from pioracle.model import ParamVector
from pioracle.permutation_engine import enumerate_exact

try:
    from pioracle import _core
except ImportError:
    _core = None

CASES = {
    "n=4 distinct": [0.0, 1.0, 2.0, 3.0],
    "n=6 sparse": [0, 0, 0, 0, 2, 3],
    "n=8 two-group": [0, 0, 0, 0, 4, 4, 4, 4],
    "n=7 distinct": [-1.5, -0.5, 0, 0.5, 1, 2, 3],
}


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--draws", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _core is None:
        print("compiled extension not built; reinstall with `pip install --no-build-isolation -e .`")
        return 1

    rng = np.random.default_rng(0)
    print(f"{'case':<16}{'arrangements':>13}{'numpy s':>10}{'cython s':>10}{'speedup':>9}{'max diff':>11}")
    for name, vals in CASES.items():
        theta = ParamVector(vals)
        arr = enumerate_exact(theta.n).arrangements(theta)
        Z = rng.normal(theta.values, 1.0, (args.draws, theta.n))
        null = (arr.values == 0).astype(np.uint8)
        call = (Z, arr.values, arr.log_mult, 1.0, null)
        t_py, out_py = best_of(lambda: _kernels_py.posterior_batch(*call), args.repeat)
        t_c, out_c = best_of(lambda: _core.posterior_batch(*call), args.repeat)
        diff = max(float(np.max(np.abs(a - b))) for a, b in zip(out_py, out_c))
        print(f"{name:<16}{arr.k:>13}{t_py:>10.3f}{t_c:>10.3f}{t_py / t_c:>8.1f}x{diff:>11.1e}")

    # per-call latency: one data vector at a time, as in single decisions
    theta = ParamVector(CASES["n=6 sparse"])
    arr = enumerate_exact(theta.n).arrangements(theta)
    rows = rng.normal(theta.values, 1.0, (2000, theta.n))
    null = (arr.values == 0).astype(np.uint8)
    for label, impl in (("numpy", _kernels_py), ("cython", _core)):
        t, _ = best_of(lambda: [impl.posterior_batch(r[None], arr.values, arr.log_mult, 1.0, null) for r in rows],
                       args.repeat)
        print(f"single-row calls, {label:<6}: {1e6 * t / len(rows):7.1f} us per call")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
