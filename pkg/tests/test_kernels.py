from __future__ import annotations

import itertools
import json
import math
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from macchiato import _kernels
from macchiato._kernels import _pykernels as py
from macchiato.grid import Neighborhood, neighbor_offsets

ck = pytest.importorskip("macchiato._kernels._ckernels") if _kernels.compiled_available() else None
needs_compiled = pytest.mark.skipif(ck is None, reason="compiled kernels not built")


def _brute_bfs(src, offsets):
    out = np.full(src.shape, -1, dtype=np.int64)
    out[src.astype(bool)] = 0
    frontier = list(zip(*np.nonzero(src)))
    step = 0
    while frontier:
        step += 1
        nxt = []
        for v in frontier:
            for o in offsets:
                w = tuple(int(a + b) for a, b in zip(v, o))
                if all(0 <= w[i] < src.shape[i] for i in range(3)) and out[w] < 0:
                    out[w] = step
                    nxt.append(w)
        frontier = nxt
    return out


@pytest.mark.parametrize("nb", list(Neighborhood))
def test_python_bfs_matches_queue_bfs(nb):
    rng = np.random.default_rng(1)
    offs = neighbor_offsets(nb)
    shape = (1, 1, 9) if nb.ndim == 1 else ((1, 6, 7) if nb.ndim == 2 else (4, 5, 6))
    for _ in range(10):
        src = (rng.random(shape) < 0.08).astype(np.uint8)
        assert np.array_equal(py.bfs_distance(src, offs), _brute_bfs(src, offs))


@needs_compiled
@pytest.mark.parametrize("nb", list(Neighborhood))
def test_compiled_bfs_matches_python(nb):
    rng = np.random.default_rng(2)
    offs = neighbor_offsets(nb)
    shape = (1, 1, 15) if nb.ndim == 1 else ((1, 9, 8) if nb.ndim == 2 else (5, 6, 7))
    for _ in range(10):
        src = np.ascontiguousarray((rng.random(shape) < 0.05).astype(np.uint8))
        assert np.array_equal(ck.bfs_distance(src, offs), py.bfs_distance(src, offs))


def _brute_subsets(bits, n, kind):
    K = len(bits)
    sets = [{j for j in range(n) if int(b) >> j & 1} for b in bits]
    best, best_key = math.inf, None
    for r in range(n + 1):
        for combo in itertools.combinations(range(n), r):
            M = set(combo)
            acc = 0.0
            for S in sets:
                sym, uni = len(M ^ S), len(M | S)
                if kind == 0:
                    acc += sym
                elif kind == 1:
                    acc += (sym / uni) ** 2 if uni else 0.0
                else:
                    den = len(M) + len(S)
                    acc += (1 - 2 * len(M & S) / den) ** 2 if den else 0.0
            v = acc / K
            if v < best - 1e-12 or (abs(v - best) <= 1e-12 and combo < best_key):
                best, best_key = min(v, best), combo
    return sum(1 << j for j in best_key), best


@pytest.mark.parametrize("kind", [0, 1, 2])
def test_enumeration_against_itertools(kind):
    rng = np.random.default_rng(3)
    for _ in range(25):
        n = int(rng.integers(1, 8))
        K = int(rng.integers(1, 5))
        bits = rng.integers(0, 1 << n, size=K).astype(np.uint64)
        want = _brute_subsets(bits, n, kind)
        got = py.enumerate_subsets(bits, n, kind)
        assert got[0] == want[0]
        assert got[1] == pytest.approx(want[1], abs=1e-12)
        if ck is not None:
            cgot = ck.enumerate_subsets(bits, n, kind)
            assert cgot[0] == want[0]
            assert cgot[1] == pytest.approx(want[1], abs=1e-12)


def test_lex_order_helper():
    # {0, 2} < {0, 3} < {1} as sorted tuples
    assert py._lex_less(0b101, 0b1001)
    assert py._lex_less(0b1001, 0b10)
    assert not py._lex_less(0b10, 0b101)
    assert py._lex_less(0b1, 0b11)


def _random_block(rng, kind):
    K = int(rng.integers(1, 5))
    size = float(rng.integers(1, 5))
    s = rng.integers(0, 8, size=K).astype(float)
    overlap = np.minimum(s, rng.integers(0, int(size) + 1, size=K)).astype(float)
    a_rest = (s - overlap) * rng.random(K)
    x1 = a_rest.sum() + rng.random() * 3
    x2 = x1 * rng.random()
    return s, a_rest, overlap, x1, x2, size


@needs_compiled
@pytest.mark.parametrize("kind", [0, 3, 4, 5, 6])
def test_compiled_soft_kernels_match_python(kind):
    rng = np.random.default_rng(4)
    for _ in range(50):
        s, a_rest, overlap, x1, x2, size = _random_block(rng, kind)
        for x in (0.0, 0.3, 1.0):
            assert ck.soft_objective(kind, s, a_rest, overlap, x1, x2, size, x) == pytest.approx(
                py.soft_objective(kind, s, a_rest, overlap, x1, x2, size, x), abs=1e-12)
        inc = float(rng.random())
        cx, cf = ck.minimize_block(kind, s, a_rest, overlap, x1, x2, size, inc, 1e-6, 20)
        px, pf = py.minimize_block(kind, s, a_rest, overlap, x1, x2, size, inc, 1e-6, 20)
        assert cf == pytest.approx(pf, abs=1e-12)
        assert cx == pytest.approx(px, abs=1e-9)


@pytest.mark.parametrize("kind", [0, 3, 4, 5, 6])
def test_minimize_block_beats_endpoints_and_incumbent(kind):
    rng = np.random.default_rng(5)
    for _ in range(50):
        s, a_rest, overlap, x1, x2, size = _random_block(rng, kind)
        inc = float(rng.random())
        x, f = _kernels.minimize_block(kind, s, a_rest, overlap, x1, x2, size, inc, 1e-6, 20)

        def obj(t):
            return _kernels.soft_objective(kind, s, a_rest, overlap, x1, x2, size, t)

        assert 0.0 <= x <= 1.0
        assert f == pytest.approx(obj(x), abs=1e-15)
        for t in (0.0, 1.0, inc):
            assert f <= obj(t) + 1e-15
        grid = np.linspace(0, 1, 2001)
        assert f <= min(obj(t) for t in grid) + 1e-6


def test_backend_name():
    assert _kernels.BACKEND_NAME in ("compiled", "python")


def test_pure_python_switch_gives_same_f1_results():
    code = ("from macchiato import _kernels, fixtures\n"
            "from macchiato.consensus import MacchiatoConfig, consensus\n"
            "st = fixtures.f1()\n"
            "print(_kernels.BACKEND_NAME)\n"
            "for d in ('jaccard', 'psd2'):\n"
            "    print(repr(consensus(st, MacchiatoConfig(d)).lmsd))\n")
    outs = {}
    for flag in ("", "1"):
        env = dict(os.environ, MACCHIATO_PURE_PYTHON=flag)
        outs[flag] = subprocess.run([sys.executable, "-c", code], env=env, check=True,
                                    capture_output=True, text=True).stdout.split()
    assert outs["1"][0] == "python"
    assert outs[""][0] == _kernels.BACKEND_NAME
    assert outs[""][1] == outs["1"][1]
    assert float(outs[""][2]) == pytest.approx(float(outs["1"][2]), abs=1e-12)


@needs_compiled
def test_benchmark_script_runs(tmp_path):
    script = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"
    out = tmp_path / "bench.json"
    subprocess.run([sys.executable, str(script), "--repeat", "1", "--json", str(out)],
                   check=True, capture_output=True)
    rows = json.loads(out.read_text())
    assert {r["case"] for r in rows} >= {"bfs_distance", "minimize_block"}
