"""Window -> temporal graph: DFT amplitude spectrum, dominant periods, adjacency.

Nodes are the time steps of a window. Every graph contains the path
0-1-...-(w-1); each detected period tau adds the edges (i, i+tau).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import WindowTooShort

# Local maxima at or below this fraction of the strongest amplitude are not
# dominant periods. This drops round-off bumps around a pure tone as well as
# the weak odd harmonics that a saturating (tanh) output adds to a sinusoid.
PEAK_REL_FLOOR = 0.1
TOP_K = 3


@dataclass
class AmplitudeSpectrum:
    amplitudes: np.ndarray
    window_length: int

    @property
    def frequencies(self) -> np.ndarray:
        return np.arange(1, self.amplitudes.shape[0] + 1)


@dataclass
class PeriodSet:
    periods: list[int] = field(default_factory=list)
    source_frequencies: list[int] = field(default_factory=list)
    source_amplitudes: list[float] = field(default_factory=list)

    def __len__(self):
        return len(self.periods)


@dataclass
class TemporalGraph:
    adjacency: np.ndarray
    node_features: np.ndarray
    periods: PeriodSet

    @property
    def n_edges(self) -> int:
        return int(np.count_nonzero(np.triu(self.adjacency, 1)))


def dft_amplitudes(column) -> AmplitudeSpectrum:
    """|X_p| for p = 1 .. floor(w/2) of a single variable."""
    x = np.asarray(column, dtype=np.float64)
    w = x.shape[0]
    if w < 4:
        raise WindowTooShort(f"window of length {w} is too short for period detection (need >= 4)")
    amps = np.abs(np.fft.fft(x))[1 : w // 2 + 1]
    return AmplitudeSpectrum(amps, w)


def batch_amplitudes(windows: np.ndarray) -> np.ndarray:
    """Pooled amplitude spectra for a stack of windows, shape (M, floor(w/2))."""
    x = np.asarray(windows, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    w = x.shape[1]
    if w < 4:
        raise WindowTooShort(f"window of length {w} is too short for period detection (need >= 4)")
    amps = np.abs(np.fft.fft(x, axis=1))[:, 1 : w // 2 + 1, :]
    return amps.mean(axis=2)


def pool_spectra(window) -> AmplitudeSpectrum:
    x = np.asarray(window, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    return AmplitudeSpectrum(batch_amplitudes(x)[0], x.shape[0])


def _period_set(periods, freqs, amps) -> PeriodSet:
    keep = periods >= 0
    return PeriodSet(
        [int(p) for p in periods[keep]],
        [int(f) for f in freqs[keep]],
        [float(a) for a in amps[keep]],
    )


def detect_top_periods(spectrum: AmplitudeSpectrum, k: int = TOP_K) -> PeriodSet:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    amps = np.ascontiguousarray(spectrum.amplitudes, dtype=np.float64)[None]
    p, f, a = kernels.detect_periods(amps, spectrum.window_length, k, PEAK_REL_FLOOR)
    return _period_set(p[0], f[0], a[0])


def build_graph(window, periods: PeriodSet) -> TemporalGraph:
    x = np.asarray(window, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    w = x.shape[0]
    row = np.array([periods.periods], dtype=np.int64).reshape(1, -1)
    if row.shape[1] == 0:
        row = np.full((1, 1), -1, dtype=np.int64)
    adj = kernels.adjacency(np.ascontiguousarray(row), w)[0]
    return TemporalGraph(adj, x, periods)


def window_graph(window, k: int = TOP_K) -> TemporalGraph:
    """pool_spectra -> detect_top_periods -> build_graph for one window."""
    spec = pool_spectra(window)
    return build_graph(window, detect_top_periods(spec, k))


def build_graphs(windows, k: int = TOP_K):
    """Vectorized graph construction for a stack of windows.

    Returns ``(adjacency, periods)`` where adjacency is an (M, w, w) uint8
    array and periods is an (M, k) int64 array padded with -1.
    """
    x = np.asarray(windows, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    w = x.shape[1]
    if x.shape[0] == 0:
        return np.zeros((0, w, w), dtype=np.uint8), np.zeros((0, k), dtype=np.int64)
    amps = np.ascontiguousarray(batch_amplitudes(x))
    periods, _, _ = kernels.detect_periods(amps, w, k, PEAK_REL_FLOOR)
    return kernels.adjacency(periods, w), periods


def edge_list(adjacency) -> list[tuple[int, int]]:
    i, j = np.nonzero(np.triu(np.asarray(adjacency), 1))
    return list(zip(i.tolist(), j.tolist()))


def write_edge_list(path, adjacency) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, j in edge_list(adjacency):
            fh.write(f"{i} {j}\n")


def write_spectrum(path, spectrum: AmplitudeSpectrum) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("p,amplitude\n")
        for p, a in zip(spectrum.frequencies, spectrum.amplitudes):
            fh.write(f"{int(p)},{float(a)!r}\n")
