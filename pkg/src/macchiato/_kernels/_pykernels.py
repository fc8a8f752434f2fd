"""NumPy fallbacks for the compiled kernels.

Every function here has the same signature and the same tie-breaking as its
counterpart in ``_ckernels.pyx``; the test-suite checks them against each
other on random inputs.
"""
from __future__ import annotations

import math

import numpy as np

KIND_HAMMING = 0
KIND_JACCARD = 1
KIND_DICE = 2
KIND_TANIMOTO = 3
KIND_SOERGEL = 4
KIND_PSD1 = 5
KIND_PSD2 = 6

INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
TIE_TOL = 1e-12


def _shifted(arr: np.ndarray, offset) -> np.ndarray:
    """Return ``out`` with ``out[x] = arr[x - offset]`` and False where undefined."""
    out = np.zeros_like(arr)
    src, dst = [], []
    for o, n in zip(offset, arr.shape):
        if o >= 0:
            src.append(slice(0, n - o))
            dst.append(slice(o, n))
        else:
            src.append(slice(-o, n))
            dst.append(slice(0, n + o))
    out[tuple(dst)] = arr[tuple(src)]
    return out


def bfs_distance(source: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Multi-source unit-step distance on a 3D array, -1 where unreachable.

    Breadth-first search expressed as repeated one-step dilation: the voxels
    first reached at step ``t`` are exactly the BFS layer ``t``.
    """
    source = np.asarray(source, dtype=bool)
    out = np.full(source.shape, -1, dtype=np.int64)
    reached = source.copy()
    out[reached] = 0
    frontier = reached
    step = 0
    while frontier.any():
        step += 1
        grown = np.zeros_like(reached)
        for off in offsets:
            grown |= _shifted(frontier, tuple(int(v) for v in off))
        frontier = grown & ~reached
        out[frontier] = step
        reached |= frontier
    return out


def _hard_terms(kind: int, sizes: np.ndarray, inter: np.ndarray, msize: np.ndarray) -> np.ndarray:
    s = sizes.astype(np.float64)
    i = inter.astype(np.float64)
    m = msize.astype(np.float64)
    if kind == KIND_HAMMING:
        return s + m - 2.0 * i
    with np.errstate(divide="ignore", invalid="ignore"):
        if kind == KIND_JACCARD:
            den = s + m - i
            d = np.where(den > 0, (s + m - 2.0 * i) / np.where(den > 0, den, 1.0), 0.0)
        else:
            den = s + m
            d = np.where(den > 0, 1.0 - 2.0 * i / np.where(den > 0, den, 1.0), 0.0)
    return d * d


def _lex_less(a: int, b: int) -> bool:
    diff = a ^ b
    if diff == 0:
        return False
    low = diff & -diff
    if a & low:
        return (b >> (low.bit_length())) != 0
    return (a >> (low.bit_length())) == 0


def enumerate_subsets(rater_bits: np.ndarray, n: int, kind: int, chunk: int = 1 << 16):
    """Exhaustively minimise the mean squared set distance over all subsets of ``n`` bits.

    Returns ``(best_bits, best_value)``; ties within 1e-12 go to the
    lexicographically smallest sorted index tuple.
    """
    bits = np.asarray(rater_bits, dtype=np.uint64)
    K = bits.shape[0]
    sizes = np.bitwise_count(bits).astype(np.float64)
    total = 1 << n

    def values(lo: int, hi: int):
        subsets = np.arange(lo, hi, dtype=np.uint64)
        msize = np.bitwise_count(subsets).astype(np.float64)
        acc = np.zeros(hi - lo, dtype=np.float64)
        for k in range(K):
            inter = np.bitwise_count(subsets & bits[k])
            acc += _hard_terms(kind, sizes[k], inter, msize)
        return subsets, acc / K

    best = math.inf
    for lo in range(0, total, chunk):
        _, v = values(lo, min(total, lo + chunk))
        best = min(best, float(v.min()))
    cutoff = best + TIE_TOL
    best_s = None
    for lo in range(0, total, chunk):
        subsets, v = values(lo, min(total, lo + chunk))
        for s in subsets[v <= cutoff]:
            s = int(s)
            if best_s is None or _lex_less(s, best_s):
                best_s = s
    msize = np.array([bin(best_s).count("1")], dtype=np.float64)
    inter = np.array([bin(best_s & int(b)).count("1") for b in bits], dtype=np.float64)
    value = float(_hard_terms(kind, sizes, inter, np.repeat(msize, K)).sum() / K)
    return best_s, value


def soft_objective(kind, s, a_rest, overlap, x1_rest, x2_rest, size, x) -> float:
    """Mean squared soft distance of a component when one block is set to ``x``."""
    s = np.asarray(s, dtype=np.float64)
    a = np.asarray(a_rest, dtype=np.float64) + np.asarray(overlap, dtype=np.float64) * x
    x1 = x1_rest + size * x
    x2 = x2_rest + size * x * x
    K = s.shape[0]
    if kind == KIND_HAMMING:
        return float(np.sum(x2 - 2.0 * a + s) / K)
    if kind == KIND_TANIMOTO:
        num = x2 - 2.0 * a + s
        den = x2 - a + s
    elif kind == KIND_SOERGEL:
        num = s + x1 - 2.0 * a
        den = s + x1 - a
    elif kind == KIND_PSD1:
        den = x1 + s
        num = den - 2.0 * a
    else:
        den = x2 + s
        num = den - 2.0 * a
    total = 0.0
    for k in range(K):
        if den[k] <= 0.0:
            continue
        d = num[k] / den[k]
        total += d * d
    return total / K


def minimize_block(kind, s, a_rest, overlap, x1_rest, x2_rest, size, incumbent, tol, grid):
    """Bounded scalar minimisation of :func:`soft_objective` over ``x`` in [0, 1].

    A coarse scan on ``grid + 1`` points brackets the best cell, golden-section
    search refines it, and the endpoints and the incumbent are always compared.
    """
    def f(x):
        return soft_objective(kind, s, a_rest, overlap, x1_rest, x2_rest, size, x)

    best_x = incumbent
    best_f = f(incumbent)
    scan_f = math.inf
    jbest = 0
    for j in range(grid + 1):
        fx = f(j / grid)
        if fx < scan_f:
            scan_f = fx
            jbest = j
    lo = (jbest - 1) / grid if jbest > 0 else 0.0
    hi = (jbest + 1) / grid if jbest < grid else 1.0
    c = hi - INVPHI * (hi - lo)
    d = lo + INVPHI * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > tol:
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - INVPHI * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + INVPHI * (hi - lo)
            fd = f(d)
    for x in (0.5 * (lo + hi), c, d, 0.0, 1.0):
        fx = f(x)
        if fx < best_f:
            best_f, best_x = fx, x
    if scan_f < best_f:
        best_f, best_x = scan_f, jbest / grid
    return best_x, best_f
