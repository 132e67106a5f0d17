"""Compare the compiled kernels with the numpy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat N] [--solves N]

Times each kernel on a small and a large batch, then a batch of full DCP
solves with the solver routed through each backend in turn.
"""
import argparse
import contextlib
import sys
import time
import timeit
from pathlib import Path

import numpy as np

from lcwra import _pykernels, kernels
from lcwra.dcp import solve_dcp

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
from conftest import random_p1_scenario  # noqa: E402

try:
    from lcwra import _ckernels
except ImportError:
    _ckernels = None

NAMES = ("theta_values", "theta_terms", "greedy_fill", "phase1_eval")


@contextlib.contextmanager
def use_backend(mod):
    saved = {n: getattr(kernels, n) for n in NAMES}
    for n in NAMES:
        setattr(kernels, n, getattr(mod, n))
    try:
        yield
    finally:
        for n, f in saved.items():
            setattr(kernels, n, f)


def kernel_cases(K, rng):
    t = rng.uniform(0.1, 5, K)
    e = rng.uniform(0, 0.1, K)
    snr = rng.exponential(5e7, K)
    scale = np.full(K, 180e3 / np.log(2))
    fixed = np.zeros(K)
    M = max(1, K // 3)
    G = rng.normal(size=(2 + 2 * K, 2 * K))
    h = rng.uniform(1, 2, 2 + 2 * K)
    y = np.concatenate((rng.uniform(0.05, 0.2, 2 * K), [5.0]))
    p1 = (G, h, rng.uniform(0, 1e-3, (M, K)), rng.uniform(0.2, 0.8, M), 50.0, 1.0,
          snr, scale, fixed, 1e-11, 3.0)
    rates = np.sort(rng.uniform(0.1, 100, K))[::-1].copy()
    sizes = rng.uniform(1, 1e4, K)
    return {
        "theta_values": (t, e, snr, scale, fixed),
        "theta_terms": (t, e, snr, scale, fixed),
        "greedy_fill": (rates, sizes, 0.5 * sizes.sum()),
        "phase1_eval": (y, True) + p1,
    }


def bench_kernels(repeat):
    rng = np.random.default_rng(0)
    backends = [("python", _pykernels)] + ([("cython", _ckernels)] if _ckernels else [])
    print(f"{'kernel':<14}{'K':>6}" + "".join(f"{n + ' us':>14}" for n, _ in backends)
          + ("     speedup" if len(backends) == 2 else ""))
    for K in (6, 200):
        cases = kernel_cases(K, rng)
        for name in NAMES:
            args = cases[name]
            times = []
            for _, mod in backends:
                fn = getattr(mod, name)
                n = max(1, repeat // (10 if K > 50 else 1))
                times.append(min(timeit.repeat(lambda: fn(*args), number=n, repeat=3)) / n * 1e6)
            row = f"{name:<14}{K:>6}" + "".join(f"{x:>14.2f}" for x in times)
            if len(times) == 2:
                row += f"{times[0] / times[1]:>11.1f}x"
            print(row)


def bench_solves(n):
    rng = np.random.default_rng(1)
    scenarios = [random_p1_scenario(rng) for _ in range(n)]
    backends = [("python", _pykernels)] + ([("cython", _ckernels)] if _ckernels else [])
    results = {}
    for label, mod in backends:
        with use_backend(mod):
            t0 = time.perf_counter()
            objs = [solve_dcp(sc)[0].objective for sc in scenarios]
            results[label] = (time.perf_counter() - t0, objs)
        print(f"DCP solves ({n} random instances), {label}: {results[label][0]:.2f} s")
    if len(results) == 2:
        a, b = results["python"][1], results["cython"][1]
        gap = max(abs(x - y) / y for x, y in zip(a, b))
        print(f"speedup {results['python'][0] / results['cython'][0]:.1f}x, "
              f"max relative objective difference {gap:.1e}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=2000)
    ap.add_argument("--solves", type=int, default=10)
    args = ap.parse_args()
    print(f"active backend: {kernels.BACKEND}")
    if _ckernels is None:
        print("compiled kernels not built; timing the numpy fallback only")
    bench_kernels(args.repeat)
    bench_solves(args.solves)


if __name__ == "__main__":
    main()
