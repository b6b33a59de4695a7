"""Compiled versus numpy kernels.

Times both backends on the same inputs, checks that they agree and prints
one line per case.  Run with ``python3 benchmarks/bench_kernels.py``.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from fracthick import _pykernels

try:
    from fracthick import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def _best_of(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def coherent_case(n_nodes: int, n_x: int, rng: np.random.Generator):
    nodes = np.linspace(0.1, 1.9, n_nodes)
    amp = rng.standard_normal(n_nodes) + 1j * rng.standard_normal(n_nodes)
    xs = rng.uniform(-2, 2, n_x)
    return nodes, amp, xs, 64.0


def mass_case(n_int: int, count: int, rng: np.random.Generator):
    edges = np.sort(rng.uniform(0, 1, 2 * n_int))
    return edges[0::2].copy(), edges[1::2].copy(), 0.01, -0.01, 1.02 / count, count


def main(argv: list[str] | None = None) -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(args.seed)
    if _ckernels is None:
        print("compiled extension not available; timing the numpy fallback only")

    print(f"{'kernel':<14}{'size':>18}{'python [s]':>13}{'compiled [s]':>14}{'speedup':>9}{'max diff':>11}")
    cases = [("coherent_sum", f"{n}x{m}", coherent_case(n, m, rng))
             for n, m in ((256, 512), (2048, 512), (8192, 2048))]
    cases += [("grid_min_mass", f"{n}x{c}", mass_case(n, c, rng))
              for n, c in ((16, 1 << 14), (256, 1 << 14), (1024, 1 << 16))]
    for name, size, inputs in cases:
        py = getattr(_pykernels, name)
        t_py = _best_of(lambda: py(*inputs), args.repeat)
        ref = py(*inputs)
        if _ckernels is None:
            print(f"{name:<14}{size:>18}{t_py:>13.4f}{'-':>14}{'-':>9}{'-':>11}")
            continue
        cf = getattr(_ckernels, name)
        t_c = _best_of(lambda: cf(*inputs), args.repeat)
        got = cf(*inputs)
        if name == "coherent_sum":
            diff = float(np.max(np.abs(got - ref)) / np.max(np.abs(ref)))
        else:
            diff = abs(got[0] - ref[0])
        print(f"{name:<14}{size:>18}{t_py:>13.4f}{t_c:>14.4f}{t_py / t_c:>9.1f}{diff:>11.1e}")


if __name__ == "__main__":
    main()
