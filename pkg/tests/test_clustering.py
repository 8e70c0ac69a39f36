import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from waterbench.clustering import (
    NOISE,
    PRESETS,
    ClusterParams,
    cluster_dataset,
    cosine_similarity,
    dbscan,
    euclidean_distance,
    neighbors,
)
from waterbench.core import AlignedGroup
from waterbench.errors import LengthMismatch, ZeroVector
from waterbench.ingest import SynthConfig, align_groups, generate_synthetic

from oracles import make_group, random_group, reference_labels


def full_window(group):
    return slice(0, len(group.members[0]))


@pytest.mark.parametrize(
    "u, v, expected",
    [((1, 2, 3), (1, 2, 3), 1.0), ((1, 1), (-1, -1), -1.0), ((1, 0), (0, 1), 0.0), ((3, 4), (4, 3), 0.96)],
)
def test_cosine_examples(u, v, expected):
    assert cosine_similarity(u, v) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize(
    "u, v, expected", [((2, 7), (2, 7), 0.0), ((0, 0, 0), (3, 4, 0), 5.0), ((1, 1), (4, 5), 5.0)]
)
def test_euclidean_examples(u, v, expected):
    assert euclidean_distance(u, v) == expected


def test_measure_errors():
    with pytest.raises(LengthMismatch):
        cosine_similarity((1, 2), (1, 2, 3))
    with pytest.raises(LengthMismatch):
        euclidean_distance((1,), (1, 2))
    with pytest.raises(ZeroVector):
        cosine_similarity((0, 0), (1, 2))


vectors = st.integers(1, 8).flatmap(
    lambda n: st.tuples(
        st.lists(st.floats(-100, 100, allow_nan=False), min_size=n, max_size=n),
        st.lists(st.floats(-100, 100, allow_nan=False), min_size=n, max_size=n),
    )
)


@given(vectors)
def test_symmetry(pair):
    u, v = pair
    assert euclidean_distance(u, v) == euclidean_distance(v, u)
    if np.linalg.norm(u) > 0 and np.linalg.norm(v) > 0:
        assert cosine_similarity(u, v) == cosine_similarity(v, u)
        assert -1.0 <= cosine_similarity(u, v) <= 1.0


@given(vectors, st.sampled_from([0.5, 2.0, 4.0, 0.25]))
def test_scale_behaviour(pair, c):
    # powers of two keep scaling exact in floating point
    u, v = np.array(pair[0]), np.array(pair[1])
    assert euclidean_distance(c * u, c * v) == c * euclidean_distance(u, v)
    if np.linalg.norm(u) > 1e-3 and np.linalg.norm(v) > 1e-3:
        assert cosine_similarity(c * u, v) == pytest.approx(cosine_similarity(u, v), abs=1e-12)


def test_neighbors_vacuous_thresholds():
    g = make_group(np.random.default_rng(0).uniform(1, 50, (6, 8)))
    params = ClusterParams(1, math.inf, -1.0)
    assert neighbors(g, 2, params, full_window(g)) == set(range(6))


def test_neighbors_zero_eps():
    g = make_group(np.random.default_rng(1).uniform(1, 50, (6, 8)))
    assert neighbors(g, 3, ClusterParams(1, 0.0, -1.0), full_window(g)) == {3}


def test_neighbors_dual_predicate():
    u = np.array([10.0, 10.0, 10.0, 10.0])
    v = np.array([11.5, 11.5, 11.5, 11.5])
    assert euclidean_distance(u, v) == 3.0
    assert cosine_similarity(u, v) >= 0.95
    g = make_group([u, v])
    w = full_window(g)
    assert neighbors(g, 0, ClusterParams(2, 10.0, 0.9), w) == {0, 1}
    # each predicate alone can exclude the pair
    assert neighbors(g, 0, ClusterParams(2, 2.9, 0.9), w) == {0}
    w2 = np.array([10.0, 0.0, 10.0, 0.0])
    g2 = make_group([u, w2])
    assert euclidean_distance(u, w2) <= 15
    assert cosine_similarity(u, w2) < 0.9
    assert neighbors(g2, 0, ClusterParams(2, 15.0, 0.9), full_window(g2)) == {0}


def test_dbscan_identical_series():
    g = make_group([np.full(10, 7.0)] * 12)
    c = dbscan(g, PRESETS["D1"])
    assert c.n_clusters == 1 and c.noise_fraction == 0.0


def test_dbscan_below_min_pts():
    g = make_group([np.full(10, 7.0)] * 5)
    c = dbscan(g, PRESETS["D1"])
    assert c.n_clusters == 0 and c.noise_fraction == 1.0


def test_dbscan_two_blobs():
    rng = np.random.default_rng(3)
    a = 20 + rng.uniform(-0.1, 0.1, (15, 10))
    b = 200 + rng.uniform(-0.1, 0.1, (15, 10))
    g = make_group(np.vstack([a, b]))
    c = dbscan(g, ClusterParams(10, 10.0, 0.8), full_window(g))
    assert c.n_clusters == 2
    labels = [c.labels[m.id] for m in g.members]
    assert len(set(labels[:15])) == 1 and len(set(labels[15:])) == 1
    assert labels[0] != labels[15]


def test_dbscan_matches_reference():
    rng = np.random.default_rng(123)
    for _ in range(40):
        g = random_group(rng)
        params = ClusterParams(int(rng.integers(1, 6)), float(rng.uniform(1, 15)), float(rng.uniform(0.5, 1)))
        w = full_window(g)
        X = np.vstack([m.array()[w] for m in g.members])
        got = dbscan(g, params, w)
        assert [got.labels[m.id] for m in g.members] == reference_labels(X, params)


def test_dbscan_core_points_and_min_size():
    rng = np.random.default_rng(7)
    for _ in range(20):
        g = random_group(rng)
        params = ClusterParams(3, 6.0, 0.8)
        w = full_window(g)
        c = dbscan(g, params, w)
        idx = {m.id: i for i, m in enumerate(g.members)}
        for cid, members in c.clusters().items():
            cores = [sid for sid in members if len(neighbors(g, idx[sid], params, w)) >= params.min_pts]
            assert cores, "cluster without a core point"


def test_dbscan_permutation_invariant():
    rng = np.random.default_rng(11)
    g = random_group(rng)
    perm = rng.permutation(len(g.members))
    shuffled = AlignedGroup(g.region_id, g.pattern, tuple(g.members[i] for i in perm))
    params = ClusterParams(2, 8.0, 0.8)
    assert dbscan(g, params).labels == dbscan(shuffled, params).labels


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(1, 20), st.floats(0.5, 0.99), st.floats(0, 5), st.floats(0, 0.3))
def test_noise_monotone(seed, eps, cos, shrink, raise_cos):
    g = random_group(np.random.default_rng(seed))
    loose = ClusterParams(3, eps, cos)
    strict = ClusterParams(3, max(eps - shrink, 0.0), min(cos + raise_cos, 1.0))
    assert dbscan(g, strict).noise_fraction >= dbscan(g, loose).noise_fraction


def test_presets_match_table():
    assert PRESETS["D1"] == ClusterParams(10, 10.0, 0.80)
    assert PRESETS["D2"] == ClusterParams(10, 10.0, 0.85)
    assert PRESETS["D3"] == ClusterParams(10, 10.0, 0.90)
    assert PRESETS["D4"] == ClusterParams(10, 5.0, 0.90)


def test_cluster_dataset_global_ids_and_summary():
    groups = align_groups(generate_synthetic(SynthConfig(n_series=1500, seed=4)))
    clustering, summary = cluster_dataset(groups, PRESETS["D1"], "D1")
    ids = set(clustering.labels.values()) - {NOISE}
    assert ids == set(range(clustering.n_clusters))
    assert summary.n_series_clustered == clustering.n_series - clustering.n_noise
    assert summary.noise_pct == pytest.approx(100 * clustering.noise_fraction)
    for members in clustering.clusters().values():
        assert len(members) >= 1


def test_cluster_dataset_empty():
    clustering, summary = cluster_dataset([], PRESETS["D1"])
    assert clustering.n_clusters == 0 and clustering.noise_fraction == 0.0
    assert summary.n_series_clustered == 0


def test_zero_vector_member_is_noise():
    rows = [np.full(10, 7.0)] * 11 + [np.zeros(10)]
    g = make_group(rows)
    c = dbscan(g, ClusterParams(10, 100.0, 0.8))
    assert c.labels[g.members[-1].id] == NOISE
    assert c.n_clusters == 1


def test_noise_trend_on_synthetic():
    groups = align_groups(generate_synthetic(SynthConfig(n_series=1500, seed=42)))
    fractions = [cluster_dataset(groups, PRESETS[k])[0].noise_fraction for k in ("D1", "D4")]
    assert fractions[1] >= fractions[0]
