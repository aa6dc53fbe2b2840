"""Time the compiled and pure-Python kernel backends on the same inputs.

Usage: python3 benchmarks/bench_kernels.py [--windows 2000] [--w 48] [--repeat 5]
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from tsgdiff import kernels
from tsgdiff.spectral import PEAK_REL_FLOOR, batch_amplitudes


def make_inputs(n_windows: int, w: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    t = np.arange(w)[None, :, None]
    periods = rng.integers(2, w // 2, size=(n_windows, 1, 1))
    windows = np.sin(2 * np.pi * t / periods) + 0.3 * rng.standard_normal((n_windows, w, 2))
    amps = np.ascontiguousarray(batch_amplitudes(windows))
    return amps, w


def run(n_windows: int, w: int, repeat: int) -> list[tuple[str, str, float]]:
    amps, w = make_inputs(n_windows, w)
    ref_periods = kernels._kernels_py.detect_periods(amps, w, 3, PEAK_REL_FLOOR)[0]
    adj = kernels._kernels_py.adjacency(ref_periods, w)
    pairs = np.arange(n_windows, dtype=np.int64)
    rows = []
    for name, mod in kernels.backends().items():
        cases = {
            "detect_periods": lambda m=mod: m.detect_periods(amps, w, 3, PEAK_REL_FLOOR),
            "adjacency": lambda m=mod: m.adjacency(ref_periods, w),
            "degree_entropy": lambda m=mod: m.degree_entropy(adj, 1e-10),
            "edit_similarity": lambda m=mod: m.edit_similarity(adj, adj[::-1].copy(), pairs, pairs),
        }
        for case, fn in cases.items():
            best = min(timeit.repeat(fn, number=1, repeat=repeat))
            rows.append((case, name, best))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--windows", type=int, default=2000)
    ap.add_argument("--w", type=int, default=48)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rows = run(args.windows, args.w, args.repeat)
    by_case: dict[str, dict[str, float]] = {}
    for case, backend, secs in rows:
        by_case.setdefault(case, {})[backend] = secs
    print(f"{args.windows} windows, w={args.w}, best of {args.repeat}")
    print(f"{'kernel':<16} {'python ms':>10} {'cython ms':>10} {'speedup':>8}")
    for case, times in by_case.items():
        py = times["python"] * 1e3
        cy = times.get("cython")
        if cy is None:
            print(f"{case:<16} {py:>10.2f} {'n/a':>10} {'n/a':>8}")
        else:
            print(f"{case:<16} {py:>10.2f} {cy * 1e3:>10.2f} {py / (cy * 1e3):>7.1f}x")


if __name__ == "__main__":
    main()
