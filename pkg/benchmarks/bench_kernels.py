"""Compiled kernels against the NumPy fallback.

Times each kernel on representative inputs, then times whole consensus
runs with each backend swapped in. Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]
"""
from __future__ import annotations

import argparse
import contextlib
import json
import sys
import timeit

import numpy as np

from macchiato import _kernels, fixtures
from macchiato._kernels import _pykernels
from macchiato.consensus import MacchiatoConfig, hard_consensus, soft_consensus
from macchiato.distances import DistanceKind
from macchiato.grid import Neighborhood, neighbor_offsets
from macchiato.oracle import exhaustive_hard

KERNELS = ("bfs_distance", "enumerate_subsets", "soft_objective", "minimize_block")


def _kernel_cases(rng):
    src = np.zeros((1, 96, 96), dtype=np.uint8)
    src[0, 40:56, 40:56] = 1
    offsets = np.ascontiguousarray(neighbor_offsets(Neighborhood.N8), dtype=np.intp)
    n = 16
    bits = np.array([int(rng.integers(1, 1 << n)) for _ in range(3)], dtype=np.uint64)
    K = 4
    s = rng.integers(5, 20, K).astype(np.float64)
    a_rest = s * rng.random(K)
    overlap = rng.integers(0, 4, K).astype(np.float64)
    soft = (_kernels.KIND_TANIMOTO, s, a_rest, overlap, 12.0, 9.0, 4.0)
    return {
        "bfs_distance": (src, offsets),
        "enumerate_subsets": (bits, n, _kernels.KIND_JACCARD),
        "soft_objective": soft + (0.4,),
        "minimize_block": soft + (0.5, 1e-6, 20),
    }


@contextlib.contextmanager
def _backend(module):
    saved = {name: getattr(_kernels, name) for name in KERNELS}
    try:
        for name in KERNELS:
            setattr(_kernels, name, getattr(module, name))
        yield
    finally:
        for name, fn in saved.items():
            setattr(_kernels, name, fn)


def _best(fn, repeat: int, number: int) -> float:
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="write results to this path")
    args = ap.parse_args(argv)
    if not _kernels.compiled_available():
        print("compiled extension not built; run `pip install -e . --no-build-isolation`",
              file=sys.stderr)
        return 1
    from macchiato._kernels import _ckernels

    rng = np.random.default_rng(0)
    cases = _kernel_cases(rng)
    rows = []
    for name in KERNELS:
        c_fn, p_fn = getattr(_ckernels, name), getattr(_pykernels, name)
        argv_ = cases[name]
        number = 3 if name == "enumerate_subsets" else 50
        tc = _best(lambda: c_fn(*argv_), args.repeat, number)
        tp = _best(lambda: p_fn(*argv_), args.repeat, number)
        rows.append({"case": name, "compiled_s": tc, "python_s": tp, "speedup": tp / tc})

    stack = fixtures.preset("two-components", 0)
    small = fixtures.random_stack(np.random.default_rng(1), max_support=16)
    workloads = {
        "hard_consensus(two-components, jaccard)":
            lambda: hard_consensus(stack, MacchiatoConfig(DistanceKind.JACCARD)),
        "soft_consensus(two-components, psd2)":
            lambda: soft_consensus(stack, MacchiatoConfig(DistanceKind.PSD2)),
        "exhaustive_hard(random, |E_S|<=16)":
            lambda: exhaustive_hard(small, DistanceKind.DICE),
    }
    for label, fn in workloads.items():
        times = {}
        for tag, module in (("compiled", _ckernels), ("python", _pykernels)):
            with _backend(module):
                times[tag] = _best(fn, args.repeat, 1)
        rows.append({"case": label, "compiled_s": times["compiled"], "python_s": times["python"],
                     "speedup": times["python"] / times["compiled"]})

    width = max(len(r["case"]) for r in rows)
    print(f"{'case':<{width}}  {'compiled':>12}  {'python':>12}  {'speedup':>8}")
    for r in rows:
        print(f"{r['case']:<{width}}  {r['compiled_s'] * 1e3:>10.3f}ms  "
              f"{r['python_s'] * 1e3:>10.3f}ms  {r['speedup']:>7.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
