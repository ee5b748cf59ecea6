import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from minority_sbm.errors import DimensionMismatch, GraphFormatError, InfeasibleParameters
from minority_sbm.graphgen import (
    Partition, SparseGraph, _skip_positions, _unrank_lower, block_sizes, make_rng,
    plan_background, read_edgelist, read_sidecar, sample_consistent_degree, sample_direct,
    sample_sbm, sample_via_background, write_edgelist, write_sidecar,
)
from minority_sbm.theory import MinorityModel, Scenario, affinity_matrix

CD = Scenario.CONSISTENT_DEGREE


def test_make_rng_reproducible():
    a = make_rng((7, 1, 2)).random(5)
    b = make_rng((7, 1, 2)).random(5)
    c = make_rng((7, 2, 1)).random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert np.array_equal(make_rng(3).random(3), make_rng(np.random.SeedSequence(3)).random(3))


def test_unrank_small_exhaustive():
    n = 40
    k = np.arange(n * (n - 1) // 2)
    i, j = _unrank_lower(k)
    assert np.all(i > j) and np.all(j >= 0)
    pairs = set(zip(i.tolist(), j.tolist()))
    assert len(pairs) == k.size


@given(st.integers(min_value=0, max_value=2**52))
def test_unrank_inverse_large(k):
    i, j = _unrank_lower(np.array([k], dtype=np.int64))
    i, j = int(i[0]), int(j[0])
    assert 0 <= j < i
    assert i * (i - 1) // 2 + j == k


def test_skip_positions_edge_cases():
    rng = make_rng(0)
    assert _skip_positions(100, 0.0, rng).size == 0
    assert np.array_equal(_skip_positions(10, 1.0, rng), np.arange(10))
    assert _skip_positions(0, 0.5, rng).size == 0


def test_skip_positions_binomial_count():
    rng = make_rng(1)
    n_pairs, p = 200_000, 0.003
    counts = [len(_skip_positions(n_pairs, p, rng)) for _ in range(50)]
    mean, sd = n_pairs * p, math.sqrt(n_pairs * p * (1 - p))
    assert abs(np.mean(counts) - mean) < 4 * sd / math.sqrt(50)
    pos = _skip_positions(n_pairs, p, rng)
    assert np.all(np.diff(pos) > 0) and pos[-1] < n_pairs


def test_block_sizes_sum_and_rounding():
    m = MinorityModel(3000, 2, 3, 0.24, 0.001, 5)
    sizes = block_sizes(m)
    assert sizes.sum() == 3000
    assert list(sizes[:2]) == [360, 360]
    assert max(sizes[2:]) - min(sizes[2:]) <= 1
    # 1001 * 0.3 / 2 = 150.15 -> 150; remainder 701 split 351/350
    assert list(block_sizes(MinorityModel(1001, 2, 2, 0.3, 0.001, 5))) == [150, 150, 351, 350]


def test_block_sizes_empty_minority():
    with pytest.raises(InfeasibleParameters):
        block_sizes(MinorityModel(20, 3, 1, 0.05, 0.01, 2))


def _block_pair_z(graph, omega):
    sizes = graph.planted.sizes()
    counts = graph.block_edge_counts()
    z = []
    for r in range(len(sizes)):
        for s in range(r, len(sizes)):
            pairs = sizes[r] * (sizes[r] - 1) / 2 if r == s else sizes[r] * sizes[s]
            p = omega[r, s]
            sd = math.sqrt(max(pairs * p * (1 - p), 1e-12))
            z.append((counts[r, s] - pairs * p) / sd)
    return np.array(z)


def test_sample_sbm_block_counts():
    m = MinorityModel(3000, 2, 3, 0.24, 0.0044, 8, CD)
    omega = affinity_matrix(m)
    zs = np.concatenate([_block_pair_z(sample_direct(m, seed=s), omega) for s in range(5)])
    # 75 roughly standard normal scores
    assert np.max(np.abs(zs)) < 4.5
    assert abs(zs.mean()) < 0.5


def test_sample_sbm_simple_graph_and_labels():
    g = sample_sbm([30, 50], [[0.5, 0.1], [0.1, 0.3]], 4)
    e = g.edges
    assert np.all(e[:, 0] < e[:, 1])
    assert len(np.unique(e, axis=0)) == len(e)
    assert list(g.planted.sizes()) == [30, 50]
    assert g.adjacency.nnz == 2 * g.m
    assert (g.adjacency != g.adjacency.T).nnz == 0


def test_sample_sbm_extremes():
    g = sample_sbm([5, 4], [[1.0, 0.0], [0.0, 1.0]], 0)
    assert g.m == 10 + 6
    assert np.all(g.block_edge_counts() == np.diag([10, 6]))
    with pytest.raises(InfeasibleParameters):
        sample_sbm([3], [[1.5]], 0)


def test_sampling_deterministic():
    m = MinorityModel(2000, 2, 2, 0.2, 0.004, 6)
    a, b = sample_direct(m, seed=(9, 1)), sample_direct(m, seed=(9, 1))
    c = sample_direct(m, seed=(9, 2))
    assert np.array_equal(a.edges, b.edges)
    assert not np.array_equal(a.edges, c.edges)


def test_background_plan_identity():
    m = MinorityModel(6000, 2, 3, 0.24, 0.0019, 5)
    n_f, rho_f, q = plan_background(m)
    kept_s = 2 * rho_f * n_f / q
    kept_b = 3 * (1 - rho_f) * n_f / q
    assert kept_s + kept_b == pytest.approx(6000)
    assert kept_s / 6000 == pytest.approx(0.24)
    with pytest.raises(InfeasibleParameters):
        plan_background(MinorityModel(6000, 2, 3, 0.24, 0.0019, 5, CD))


def test_via_background_matches_direct_law():
    m = MinorityModel(3000, 2, 3, 0.2, 0.004, 8)
    omega = affinity_matrix(m)
    for s in range(3):
        g = sample_via_background(m, seed=s)
        assert np.array_equal(g.planted.sizes(), block_sizes(m))
        assert np.max(np.abs(_block_pair_z(g, omega))) < 4.5


def test_consistent_degree_sampler_degrees():
    m = MinorityModel(3000, 2, 3, 0.24, 0.0044, 5, CD)
    g = sample_consistent_degree(m, seed=3)
    deg = g.degrees()
    small = g.planted.labels < 2
    for mask in (small, ~small):
        se = math.sqrt(m.d / mask.sum())
        assert abs(deg[mask].mean() - m.d) < 4 * se
    with pytest.raises(InfeasibleParameters):
        sample_consistent_degree(m.with_(scenario=Scenario.CONSISTENT_POUT))


def test_sparse_graph_normalises_edges():
    g = SparseGraph(4, [[1, 0], [0, 1], [2, 3]])
    assert g.edges.tolist() == [[0, 1], [2, 3]]
    assert list(g.degrees()) == [1, 1, 1, 1]
    assert list(g.neighbors(0)) == [1]
    with pytest.raises(GraphFormatError):
        SparseGraph(3, [[1, 1]])
    with pytest.raises(DimensionMismatch):
        SparseGraph(2, [[0, 2]])
    with pytest.raises(DimensionMismatch):
        SparseGraph(3, [[0, 1]], Partition([0, 0], 1))


def test_partition_from_labels():
    p = Partition.from_labels(["b", "a", "b", "c"])
    assert p.labels.tolist() == [0, 1, 0, 2] and p.q == 3
    with pytest.raises(ValueError):
        Partition([0, 3], 2)


def test_edgelist_round_trip(tmp_path):
    m = MinorityModel(500, 1, 2, 0.2, 0.02, 6)
    g = sample_direct(m, seed=1)
    write_edgelist(g, tmp_path / "g.edges")
    write_sidecar(g, tmp_path / "g.json", model=m)
    n, planted, model, _ = read_sidecar(tmp_path / "g.json")
    h = read_edgelist(tmp_path / "g.edges", n=n, planted=planted)
    assert np.array_equal(g.edges, h.edges) and h.n == g.n
    assert planted == g.planted and model == m


@pytest.mark.parametrize("text, exc", [
    ("0 1\n1 x\n", GraphFormatError),
    ("0 1 2\n", GraphFormatError),
    ("3 3\n", GraphFormatError),
    ("-1 2\n", GraphFormatError),
])
def test_edgelist_malformed(tmp_path, text, exc):
    p = tmp_path / "bad.edges"
    p.write_text(text)
    with pytest.raises(exc):
        read_edgelist(p)


def test_edgelist_dimension_mismatch(tmp_path):
    p = tmp_path / "g.edges"
    p.write_text("# header\n0 1\n\n1 9\n")
    assert read_edgelist(p).n == 10
    with pytest.raises(DimensionMismatch):
        read_edgelist(p, n=5)


def test_sidecar_errors(tmp_path):
    p = tmp_path / "s.json"
    p.write_text("{not json")
    with pytest.raises(GraphFormatError):
        read_sidecar(p)
    p.write_text('{"m": 3}')
    with pytest.raises(GraphFormatError):
        read_sidecar(p)
    p.write_text('{"n": 3, "labels": [0, 1]}')
    with pytest.raises(DimensionMismatch):
        read_sidecar(p)
    with pytest.raises(FileNotFoundError):
        read_sidecar(tmp_path / "missing.json")


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 60), st.floats(0.0, 1.0), st.integers(0, 2**32 - 1))
def test_er_edges_valid(n, p, seed):
    g = sample_sbm([n], [[p]], seed)
    assert g.m <= n * (n - 1) // 2
    if g.m:
        assert g.edges.min() >= 0 and g.edges.max() < n
