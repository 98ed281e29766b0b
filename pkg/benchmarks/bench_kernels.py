"""Benchmark the compiled incidence kernels against the scipy CSR fallback.

The incidence operator dispatches per call on ``gtfrec._kernels.HAVE_FAST``,
so both code paths can be timed in one process.  Setting GTFREC_NO_FAST=1
before import forces the fallback for an entire run instead.

Usage:  python benchmarks/bench_kernels.py [--sizes 10000 100000] [--dim 64]
"""

import argparse
import time

import numpy as np

from gtfrec import _kernels
from gtfrec.filtering import FilterConfig, gtcf_filter
from gtfrec.graph import build_graph, build_incidence


def random_graph(num_edges, rng, avg_user_degree=40):
    n = max(num_edges // avg_user_degree, 10)
    m = 2 * n
    keys = np.array([], dtype=np.int64)
    while keys.size < num_edges:
        draw = rng.integers(0, n * m, size=2 * num_edges)
        keys = np.unique(np.concatenate([keys, draw]))
    keys = np.sort(rng.permutation(keys)[:num_edges])
    return build_graph(list(zip((keys // m).tolist(), (keys % m).tolist())), n, m)


def best_of(fn, repeats=5):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(num_edges, dim, rng):
    op = build_incidence(random_graph(num_edges, rng))
    M = rng.standard_normal((op.num_nodes, dim))
    Y = rng.standard_normal((op.num_edges, dim))
    cfg = FilterConfig(lam=0.5, num_layers=20)

    rows = {}
    for backend, flag in (("cython", True), ("scipy", False)):
        if flag and not _kernels.HAVE_FAST:
            continue
        saved = _kernels.HAVE_FAST
        _kernels.HAVE_FAST = flag
        try:
            np.testing.assert_allclose(op.forward(M), op._mat @ M, atol=1e-12)
            rows[backend] = (
                best_of(lambda: op.forward(M)),
                best_of(lambda: op.transpose(Y)),
                best_of(lambda: gtcf_filter(M, op, cfg, keep_masks=False)),
            )
        finally:
            _kernels.HAVE_FAST = saved
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+",
                    default=[10_000, 100_000, 1_000_000])
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print(f"compiled kernels available: {_kernels.HAVE_FAST} "
          f"(backend: {_kernels.BACKEND})")
    rng = np.random.default_rng(args.seed)
    header = f"{'edges':>10} {'backend':>8} {'forward':>10} {'adjoint':>10} {'filter20':>10}"
    print(header)
    print("-" * len(header))
    for num_edges in args.sizes:
        for backend, (fwd, adj, filt) in bench(num_edges, args.dim, rng).items():
            print(f"{num_edges:>10} {backend:>8} {fwd * 1e3:>9.2f}m {adj * 1e3:>9.2f}m "
                  f"{filt * 1e3:>9.2f}m")


if __name__ == "__main__":
    main()
