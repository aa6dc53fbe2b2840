"""Pure-Python/numpy versions of the compiled kernels in ``_kernels.pyx``."""
import math

import numpy as np


def detect_periods(amps, w, k, rel_floor):
    amps = np.ascontiguousarray(amps, dtype=np.float64)
    M, P = amps.shape
    periods = np.full((M, k), -1, dtype=np.int64)
    freqs = np.full((M, k), -1, dtype=np.int64)
    vals = np.zeros((M, k), dtype=np.float64)
    for m in range(M):
        a = amps[m]
        amax = a.max(initial=0.0)
        if amax <= 1e-12:
            continue
        floor_ = rel_floor * amax
        cand = []
        for i in range(P):
            if a[i] <= floor_:
                continue
            if i > 0 and not a[i] > a[i - 1]:
                continue
            if i < P - 1 and not a[i] > a[i + 1]:
                continue
            cand.append(i)
        # stable sort keeps lower index first among equal amplitudes
        ranked = sorted(cand, key=lambda i: -a[i])[:k]
        kept = []
        for i in ranked:
            p = i + 1
            period = int(math.floor(w / p + 0.5))
            if period <= 1 or period >= w or any(period == q for q, _, _ in kept):
                continue
            kept.append((period, p, a[i]))
        kept.sort(key=lambda t: t[0])
        for j, (period, p, amp) in enumerate(kept):
            periods[m, j] = period
            freqs[m, j] = p
            vals[m, j] = amp
    return periods, freqs, vals


def adjacency(periods, w):
    periods = np.asarray(periods, dtype=np.int64)
    M = periods.shape[0]
    out = np.zeros((M, w, w), dtype=np.uint8)
    i = np.arange(w - 1)
    out[:, i, i + 1] = 1
    out[:, i + 1, i] = 1
    for m in range(M):
        for tau in periods[m]:
            if tau < 1:
                continue
            j = np.arange(w - tau)
            out[m, j, j + tau] = 1
            out[m, j + tau, j] = 1
    return out


def degree_entropy(adj, eps):
    adj = np.asarray(adj)
    M, N = adj.shape[0], adj.shape[1]
    deg = adj.sum(axis=2, dtype=np.int64)
    out = np.zeros(M, dtype=np.float64)
    for m in range(M):
        counts = np.bincount(deg[m], minlength=N + 1)
        p = counts[counts > 0] / N
        out[m] = -np.sum(p * np.log2(np.maximum(p, eps)))
    return out


def edit_similarity(a, b, ia, ib):
    N = a.shape[1]
    diff = np.count_nonzero(a[ia] != b[ib], axis=(1, 2))
    return 1.0 - diff / float(N * N)
