"""Compiled vs pure-Python kernels on scenario attack graphs.

    python benchmarks/bench_kernels.py [--sizes 50 100 200] [--repeat 3]

Times ``compute_attack_paths`` (all-pairs canonical paths and betweenness)
and ``count_daps`` (path counting on the decoy-augmented graph) with both
backends, checks that they agree, and prints one row per size.
"""

import argparse
import time

import numpy as np

from decoyplace.allocators import solve_heuristic
from decoyplace.attack_graph import compute_attack_paths
from decoyplace.experiment import ScenarioConfig, build_scenario
from decoyplace.kernels import get_backend
from decoyplace.objective import count_daps


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[50, 100, 200])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args(argv)
    try:
        get_backend("cython")
    except ImportError:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")

    print(f"{'M':>5} {'kernel':<14} {'python s':>10} {'cython s':>10} {'speedup':>8}")
    for m in args.sizes:
        sc = build_scenario(ScenarioConfig(m_count=m, delta=0.3, master_seed=args.seed), 0)
        x = solve_heuristic(sc.plan, sc.ctx).x
        py_t, py_idx = best_of(lambda: compute_attack_paths(sc.graph, backend="python"), args.repeat)
        cy_t, cy_idx = best_of(lambda: compute_attack_paths(sc.graph, backend="cython"), args.repeat)
        assert np.array_equal(py_idx.dist, cy_idx.dist) and np.array_equal(py_idx.sigma, cy_idx.sigma)
        print(f"{m:>5} {'attack paths':<14} {py_t:>10.4f} {cy_t:>10.4f} {py_t / cy_t:>7.1f}x")
        py_t, py_m = best_of(lambda: count_daps(sc.graph, x, backend="python"), args.repeat)
        cy_t, cy_m = best_of(lambda: count_daps(sc.graph, x, backend="cython"), args.repeat)
        assert py_m == cy_m
        print(f"{m:>5} {'count daps':<14} {py_t:>10.4f} {cy_t:>10.4f} {py_t / cy_t:>7.1f}x")


if __name__ == "__main__":
    main()
