# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. Signatures mirror ``_pykernels`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef enum:
    KIND_HAMMING = 0
    KIND_JACCARD = 1
    KIND_DICE = 2
    KIND_TANIMOTO = 3
    KIND_SOERGEL = 4
    KIND_PSD1 = 5
    KIND_PSD2 = 6

cdef double INVPHI = 0.6180339887498949
cdef double TIE_TOL = 1e-12


def bfs_distance(const unsigned char[:, :, ::1] source, const cnp.intp_t[:, ::1] offsets):
    cdef Py_ssize_t n0 = source.shape[0], n1 = source.shape[1], n2 = source.shape[2]
    cdef Py_ssize_t total = n0 * n1 * n2
    cdef Py_ssize_t m = offsets.shape[0]
    out_arr = np.full((n0, n1, n2), -1, dtype=np.int64)
    cdef int64_t[:, :, ::1] out = out_arr
    cdef cnp.intp_t[::1] queue = np.empty(max(total, 1), dtype=np.intp)
    cdef Py_ssize_t head = 0, tail = 0, idx, i, j, k, a, b, c, o
    cdef int64_t d

    for i in range(n0):
        for j in range(n1):
            for k in range(n2):
                if source[i, j, k]:
                    out[i, j, k] = 0
                    queue[tail] = (i * n1 + j) * n2 + k
                    tail += 1

    while head < tail:
        idx = queue[head]
        head += 1
        k = idx % n2
        j = (idx // n2) % n1
        i = idx // (n1 * n2)
        d = out[i, j, k] + 1
        for o in range(m):
            a = i + offsets[o, 0]
            b = j + offsets[o, 1]
            c = k + offsets[o, 2]
            if a < 0 or a >= n0 or b < 0 or b >= n1 or c < 0 or c >= n2:
                continue
            if out[a, b, c] < 0:
                out[a, b, c] = d
                queue[tail] = (a * n1 + b) * n2 + c
                tail += 1
    return out_arr


cdef inline int _popcount(uint64_t x) nogil:
    return __builtin_popcountll(x)


cdef extern from *:
    int __builtin_popcountll(unsigned long long) nogil


cdef inline double _hard_term(int kind, double s, double inter, double msize) nogil:
    cdef double den, d
    if kind == KIND_HAMMING:
        return s + msize - 2.0 * inter
    if kind == KIND_JACCARD:
        den = s + msize - inter
        if den <= 0.0:
            return 0.0
        d = (s + msize - 2.0 * inter) / den
        return d * d
    den = s + msize
    if den <= 0.0:
        return 0.0
    d = 1.0 - 2.0 * inter / den
    return d * d


cdef inline bint _lex_less(uint64_t a, uint64_t b) nogil:
    # sorted-tuple lexicographic order of the bit sets a and b
    cdef uint64_t diff = a ^ b
    cdef uint64_t low, above
    if diff == 0:
        return False
    low = diff & (~diff + 1)
    above = ~(low | (low - 1))
    if a & low:
        return (b & above) != 0
    return (a & above) == 0


def enumerate_subsets(const uint64_t[::1] rater_bits, int n, int kind):
    cdef Py_ssize_t K = rater_bits.shape[0]
    cdef uint64_t total = (<uint64_t>1) << n
    cdef uint64_t s, best_s = 0
    cdef double best = 1e300, v, msize
    cdef Py_ssize_t k
    cdef double[64] sizes
    for k in range(K):
        sizes[k] = _popcount(rater_bits[k])
    for s in range(total):
        msize = _popcount(s)
        v = 0.0
        for k in range(K):
            v += _hard_term(kind, sizes[k], _popcount(s & rater_bits[k]), msize)
        v /= K
        if v < best:
            best = v
    cdef double cutoff = best + TIE_TOL
    cdef bint found = False
    for s in range(total):
        msize = _popcount(s)
        v = 0.0
        for k in range(K):
            v += _hard_term(kind, sizes[k], _popcount(s & rater_bits[k]), msize)
        v /= K
        if v <= cutoff:
            if not found or _lex_less(s, best_s):
                best_s = s
                found = True
    msize = _popcount(best_s)
    v = 0.0
    for k in range(K):
        v += _hard_term(kind, sizes[k], _popcount(best_s & rater_bits[k]), msize)
    return int(best_s), v / K


cdef double _soft_objective(int kind, const double[::1] s, const double[::1] a_rest,
                            const double[::1] overlap, double x1_rest, double x2_rest,
                            double size, double x) nogil:
    cdef Py_ssize_t K = s.shape[0], k
    cdef double total = 0.0, a, x1, x2, num, den, d
    x1 = x1_rest + size * x
    x2 = x2_rest + size * x * x
    for k in range(K):
        a = a_rest[k] + overlap[k] * x
        if kind == KIND_HAMMING:
            total += x2 - 2.0 * a + s[k]
            continue
        if kind == KIND_TANIMOTO:
            num = x2 - 2.0 * a + s[k]
            den = x2 - a + s[k]
        elif kind == KIND_SOERGEL:
            num = s[k] + x1 - 2.0 * a
            den = s[k] + x1 - a
        elif kind == KIND_PSD1:
            den = x1 + s[k]
            num = den - 2.0 * a
        else:
            den = x2 + s[k]
            num = den - 2.0 * a
        if den <= 0.0:
            continue
        d = num / den
        total += d * d
    return total / K


def soft_objective(int kind, const double[::1] s, const double[::1] a_rest,
                   const double[::1] overlap, double x1_rest, double x2_rest,
                   double size, double x):
    return _soft_objective(kind, s, a_rest, overlap, x1_rest, x2_rest, size, x)


def minimize_block(int kind, const double[::1] s, const double[::1] a_rest,
                   const double[::1] overlap, double x1_rest, double x2_rest,
                   double size, double incumbent, double tol, int grid):
    cdef double best_x = incumbent
    cdef double best_f = _soft_objective(kind, s, a_rest, overlap, x1_rest, x2_rest, size, incumbent)
    cdef double fx, x, lo, hi, c, d, fc, fd, scan_f = 1e300
    cdef int j, jbest = 0
    for j in range(grid + 1):
        x = <double>j / grid
        fx = _soft_objective(kind, s, a_rest, overlap, x1_rest, x2_rest, size, x)
        if fx < scan_f:
            scan_f = fx
            jbest = j
    lo = <double>(jbest - 1) / grid if jbest > 0 else 0.0
    hi = <double>(jbest + 1) / grid if jbest < grid else 1.0
    c = hi - INVPHI * (hi - lo)
    d = lo + INVPHI * (hi - lo)
    fc = _soft_objective(kind, s, a_rest, overlap, x1_rest, x2_rest, size, c)
    fd = _soft_objective(kind, s, a_rest, overlap, x1_rest, x2_rest, size, d)
    while hi - lo > tol:
        if fc <= fd:
            hi = d
            d = c
            fd = fc
            c = hi - INVPHI * (hi - lo)
            fc = _soft_objective(kind, s, a_rest, overlap, x1_rest, x2_rest, size, c)
        else:
            lo = c
            c = d
            fc = fd
            d = lo + INVPHI * (hi - lo)
            fd = _soft_objective(kind, s, a_rest, overlap, x1_rest, x2_rest, size, d)
    for j in range(5):
        if j == 0:
            x = 0.5 * (lo + hi)
        elif j == 1:
            x = c
        elif j == 2:
            x = d
        elif j == 3:
            x = 0.0
        else:
            x = 1.0
        fx = _soft_objective(kind, s, a_rest, overlap, x1_rest, x2_rest, size, x)
        if fx < best_f:
            best_f = fx
            best_x = x
    if scan_f < best_f:
        best_f = scan_f
        best_x = <double>jbest / grid
    return best_x, best_f
