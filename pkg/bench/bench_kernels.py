"""Compare the compiled and numpy equilibrium kernels.

    python bench/bench_kernels.py [--f 3] [--repeat 5]

Times reach_terminals + best_response_mask over every subgame of the closing
subgame, then the full brute-force solve with each backend.
"""

import argparse
import time
from fractions import Fraction

import numpy as np

from wardenvc import _kernels_py
from wardenvc import gametheory as gt

try:
    from wardenvc import _kernels as _kernels_cy
except ImportError:
    _kernels_cy = None


def kernel_pass(k, cg):
    for r, n in enumerate(cg.nodes):
        if n.terminal:
            continue
        term = k.reach_terminals(cg.child_start, cg.children, cg.node_infoset, cg.radices, r)
        vals = np.ascontiguousarray(cg.terminal_payoff[term][:, 0])
        axes = np.array(sorted(cg.subtree_infosets[r]), dtype=np.int64)
        k.best_response_mask(vals, cg.radices, axes)


def timed(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--f", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    p = gt.GameParams(Fraction(20), Fraction(1), d=5, k=2, c=4, f=args.f, v=10)
    g = gt.build_subgame1(p)
    cg = gt.compile_game(g)
    n = int(np.prod(cg.radices))
    print(f"closing subgame f={args.f}: {len(cg.nodes)} nodes, {len(cg.infosets)} infosets, {n} joint strategies")
    backends = [("numpy", _kernels_py)] + ([("cython", _kernels_cy)] if _kernels_cy else [])
    base = None
    for name, k in backends:
        t = timed(lambda: kernel_pass(k, cg), args.repeat)
        gt.kernels = k
        solve = timed(lambda: gt.brute_force_spne(g), args.repeat)
        base = base or t
        print(f"{name:>7}: kernels {t * 1e3:8.2f} ms  brute force {solve * 1e3:8.2f} ms  speedup x{base / t:.1f}")
    if _kernels_cy is None:
        print("compiled kernels not built; run: python setup.py build_ext --inplace")


if __name__ == "__main__":
    main()
