import csv

import numpy as np
import scipy.integrate
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsgdiff import metrics
from tsgdiff.errors import DimensionMismatch, EmptySampleSet, InsufficientData
from tsgdiff.spectral import build_graphs

from conftest import sine_values


def path(n):
    a = np.zeros((n, n), dtype=np.uint8)
    i = np.arange(n - 1)
    a[i, i + 1] = a[i + 1, i] = 1
    return a


def test_degree_distribution():
    d = metrics.DegreeDistribution.of(path(4))
    assert d.counts == {1: 2, 2: 2} and d.total_nodes == 4
    assert sum(d.probabilities().values()) == pytest.approx(1.0)


def test_edit_similarity_hand_value():
    a = path(4)
    b = a.copy()
    b[0, 2] = b[2, 0] = 1  # one extra undirected edge = two differing entries
    assert metrics.graph_edit_similarity(a, b) == pytest.approx(1 - 2 / 16, abs=1e-12)
    assert metrics.graph_edit_similarity(a, a) == 1.0
    with pytest.raises(DimensionMismatch):
        metrics.graph_edit_similarity(path(4), path(5))


def test_entropy_similarity_hand_value():
    # path on 4 nodes has H = 1 bit; a 4-cycle has every degree 2 so H = 0
    cyc = path(4)
    cyc[0, 3] = cyc[3, 0] = 1
    assert metrics.structural_entropy(path(4)) == pytest.approx(1.0, abs=1e-9)
    assert metrics.structural_entropy(cyc) == pytest.approx(0.0, abs=1e-9)
    assert metrics.entropy_similarity(path(4), cyc) == pytest.approx(0.5, abs=1e-9)


def test_topo_fid_identity_self_is_one():
    adj, _ = build_graphs(np.random.default_rng(0).standard_normal((30, 24, 2)))
    rep = metrics.topo_fid(adj, adj, pairing="identity")
    assert rep.topo_fid == 1.0 and rep.pair_count == 30


def test_topo_fid_alpha_endpoints():
    rng = np.random.default_rng(1)
    a, _ = build_graphs(rng.standard_normal((20, 16, 1)))
    b, _ = build_graphs(rng.standard_normal((25, 16, 1)))
    r1 = metrics.topo_fid(a, b, alpha=1.0, rng=np.random.default_rng(3))
    r0 = metrics.topo_fid(a, b, alpha=0.0, rng=np.random.default_rng(3))
    assert r1.topo_fid == pytest.approx(r1.s_edit_mean, abs=1e-12)
    assert r0.topo_fid == pytest.approx(r0.s_entropy_mean, abs=1e-12)


def test_topo_fid_single_pair_exact():
    a, b = path(4), path(4).copy()
    b[0, 2] = b[2, 0] = 1
    rep = metrics.topo_fid([a], [b], alpha=0.3, pairs=5)
    expect = 0.3 * metrics.graph_edit_similarity(a, b) + 0.7 * metrics.entropy_similarity(a, b)
    assert rep.topo_fid == pytest.approx(expect, abs=1e-12)


def test_topo_fid_errors():
    with pytest.raises(EmptySampleSet):
        metrics.topo_fid(np.zeros((0, 4, 4)), [path(4)])
    with pytest.raises(DimensionMismatch):
        metrics.topo_fid([path(4)], [path(5)])


def test_topo_fid_seeded():
    rng = np.random.default_rng(2)
    a, _ = build_graphs(rng.standard_normal((20, 16, 1)))
    b, _ = build_graphs(rng.standard_normal((20, 16, 1)))
    r1 = metrics.topo_fid(a, b, rng=np.random.default_rng(9))
    r2 = metrics.topo_fid(a, b, rng=np.random.default_rng(9))
    assert r1 == r2


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_topo_fid_ranges(seed):
    rng = np.random.default_rng(seed)
    a, _ = build_graphs(rng.standard_normal((5, 12, 1)))
    b, _ = build_graphs(rng.standard_normal((6, 12, 1)))
    rep = metrics.topo_fid(a, b, pairs=50, rng=rng)
    assert 0 <= rep.topo_fid <= 1 and 0 <= rep.s_edit_mean <= 1 and 0 < rep.s_entropy_mean <= 1


def test_correlational():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((30, 10, 3))
    assert metrics.correlational_score(x, x) == 0.0
    y = x.copy()
    y[..., 2] = x[..., 0]
    assert metrics.correlational_score(x, y) > 0.1
    z = x.copy()
    z[..., 1] = 5.0
    with pytest.warns(RuntimeWarning):
        assert np.isfinite(metrics.correlational_score(x, z))


def _sine_windows(n, seed=0):
    from tsgdiff.data import TimeSeriesTable, prepare_windows

    return prepare_windows(TimeSeriesTable(sine_values(T=n + 47), ["a", "b"]), 48).windows


def test_discriminative_real_vs_real_and_noise():
    real = _sine_windows(400)
    rng = np.random.default_rng(0)
    perm = rng.permutation(len(real))
    half_a, half_b = real[perm[:200]], real[perm[200:]]
    assert metrics.discriminative_score(half_a, half_b, np.random.default_rng(1)) < 0.1
    noise = rng.uniform(-1, 1, half_b.shape)
    assert metrics.discriminative_score(half_a, noise, np.random.default_rng(1)) > 0.3


def test_discriminative_needs_data():
    with pytest.raises(InsufficientData):
        metrics.discriminative_score(np.zeros((10, 4, 1)), np.zeros((30, 4, 1)), np.random.default_rng(0))


def test_predictive_constant_and_ordering():
    const = np.full((40, 12, 2), 0.3)
    assert metrics.predictive_score(const, const, np.random.default_rng(0)) < 0.05
    real = _sine_windows(200)
    noise = np.random.default_rng(0).uniform(-1, 1, real.shape)
    trtr = metrics.predictive_score(real, real, np.random.default_rng(0))
    noisy = metrics.predictive_score(real, noise, np.random.default_rng(0))
    assert 0 <= trtr <= noisy


def test_export_plot_data(tmp_path):
    rng = np.random.default_rng(0)
    real = rng.standard_normal((30, 8, 2))
    synth = rng.standard_normal((20, 8, 2)) * 0.5
    kde_path, pca_path = metrics.export_plot_data(real, synth, tmp_path)
    rows = np.loadtxt(kde_path, delimiter=",", skiprows=1)
    assert rows.shape == (256, 3)
    for col in (1, 2):
        assert scipy.integrate.trapezoid(rows[:, col], rows[:, 0]) == pytest.approx(1.0, abs=0.01)
    with open(pca_path) as fh:
        recs = list(csv.DictReader(fh))
    assert len(recs) == 50 and {r["label"] for r in recs} == {"real", "synth"}
    metrics.export_plot_data(real, real, tmp_path / "same")
    same = np.loadtxt(tmp_path / "same" / "kde.csv", delimiter=",", skiprows=1)
    np.testing.assert_array_equal(same[:, 1], same[:, 2])


def test_pca_zero_variance_at_origin():
    x = np.full((10, 4, 1), 2.0)
    pr, ps = metrics.pca_projection(x, x)
    assert not pr.any() and not ps.any()


def test_report_dict_is_flat():
    rep = metrics.MetricReport(1.0, 1.0, 1.0)
    d = rep.to_dict()
    assert set(d) == {"topo_fid", "s_edit_mean", "s_entropy_mean", "correlational", "discriminative",
                      "predictive", "pair_count", "seed"}
    assert all(not isinstance(v, (dict, list)) for v in d.values())
