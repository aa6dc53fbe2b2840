# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for per-window graph construction and Topo-FID scoring.

Signatures and results match ``_kernels_py`` exactly; ``kernels`` picks one at import.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport log2, floor

cnp.import_array()


def detect_periods(const double[:, ::1] amps, Py_ssize_t w, Py_ssize_t k, double rel_floor):
    cdef Py_ssize_t M = amps.shape[0], P = amps.shape[1]
    cdef Py_ssize_t m, i, j, n_cand, n_keep, n_out, p, period, best
    cdef double amax, floor_, a
    cdef bint is_peak, dup
    periods_np = np.full((M, k), -1, dtype=np.int64)
    freqs_np = np.full((M, k), -1, dtype=np.int64)
    vals_np = np.zeros((M, k), dtype=np.float64)
    cdef long long[:, ::1] periods = periods_np
    cdef long long[:, ::1] freqs = freqs_np
    cdef double[:, ::1] vals = vals_np
    cand_np = np.empty(P, dtype=np.int64)
    used_np = np.empty(P, dtype=np.uint8)
    cdef long long[::1] cand = cand_np
    cdef unsigned char[::1] used = used_np
    cdef long long[::1] kept_p = np.empty(k, dtype=np.int64)
    cdef long long[::1] kept_f = np.empty(k, dtype=np.int64)
    cdef double[::1] kept_a = np.empty(k, dtype=np.float64)
    cdef long long tp
    cdef double ta

    for m in range(M):
        amax = 0.0
        for i in range(P):
            if amps[m, i] > amax:
                amax = amps[m, i]
        if amax <= 1e-12:
            continue
        floor_ = rel_floor * amax
        n_cand = 0
        for i in range(P):
            a = amps[m, i]
            if a <= floor_:
                continue
            is_peak = True
            if i > 0 and not (a > amps[m, i - 1]):
                is_peak = False
            if i < P - 1 and not (a > amps[m, i + 1]):
                is_peak = False
            if is_peak:
                cand[n_cand] = i
                used[n_cand] = 0
                n_cand += 1
        # selection by amplitude, ties toward lower index (candidates are in index order)
        n_out = 0
        n_keep = k if k < n_cand else n_cand
        for j in range(n_keep):
            best = -1
            for i in range(n_cand):
                if used[i]:
                    continue
                if best < 0 or amps[m, cand[i]] > amps[m, cand[best]]:
                    best = i
            used[best] = 1
            p = cand[best] + 1
            period = <Py_ssize_t>floor(<double>w / <double>p + 0.5)
            if period <= 1 or period >= w:
                continue
            dup = False
            for i in range(n_out):
                if kept_p[i] == period:
                    dup = True
                    break
            if dup:
                continue
            kept_p[n_out] = period
            kept_f[n_out] = p
            kept_a[n_out] = amps[m, cand[best]]
            n_out += 1
        # insertion sort ascending by period
        for i in range(1, n_out):
            j = i
            while j > 0 and kept_p[j - 1] > kept_p[j]:
                tp = kept_p[j]; kept_p[j] = kept_p[j - 1]; kept_p[j - 1] = tp
                tp = kept_f[j]; kept_f[j] = kept_f[j - 1]; kept_f[j - 1] = tp
                ta = kept_a[j]; kept_a[j] = kept_a[j - 1]; kept_a[j - 1] = ta
                j -= 1
        for i in range(n_out):
            periods[m, i] = kept_p[i]
            freqs[m, i] = kept_f[i]
            vals[m, i] = kept_a[i]
    return periods_np, freqs_np, vals_np


def adjacency(const long long[:, ::1] periods, Py_ssize_t w):
    cdef Py_ssize_t M = periods.shape[0], k = periods.shape[1]
    cdef Py_ssize_t m, i, j, tau
    out_np = np.zeros((M, w, w), dtype=np.uint8)
    cdef unsigned char[:, :, ::1] out = out_np
    for m in range(M):
        for i in range(w - 1):
            out[m, i, i + 1] = 1
            out[m, i + 1, i] = 1
        for j in range(k):
            tau = periods[m, j]
            if tau < 1:
                continue
            for i in range(w - tau):
                out[m, i, i + tau] = 1
                out[m, i + tau, i] = 1
    return out_np


def degree_entropy(const unsigned char[:, :, ::1] adj, double eps):
    cdef Py_ssize_t M = adj.shape[0], N = adj.shape[1]
    cdef Py_ssize_t m, i, j, deg
    cdef double h, p
    out_np = np.zeros(M, dtype=np.float64)
    cdef double[::1] out = out_np
    cdef long long[::1] hist = np.zeros(N + 1, dtype=np.int64)
    for m in range(M):
        for i in range(N + 1):
            hist[i] = 0
        for i in range(N):
            deg = 0
            for j in range(N):
                deg += adj[m, i, j]
            hist[deg] += 1
        h = 0.0
        for i in range(N + 1):
            if hist[i]:
                p = <double>hist[i] / <double>N
                # eps clamps the argument; it never binds for observed degrees
                h -= p * log2(p if p > eps else eps)
        out[m] = h
    return out_np


def edit_similarity(const unsigned char[:, :, ::1] a, const unsigned char[:, :, ::1] b,
                    const long long[::1] ia, const long long[::1] ib):
    cdef Py_ssize_t n = ia.shape[0], N = a.shape[1]
    cdef Py_ssize_t q, i, j, ra, rb
    cdef long long diff
    cdef double denom = <double>(N * N)
    out_np = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_np
    for q in range(n):
        ra = ia[q]
        rb = ib[q]
        diff = 0
        for i in range(N):
            for j in range(N):
                diff += a[ra, i, j] != b[rb, i, j]
        out[q] = 1.0 - <double>diff / denom
    return out_np
