import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.cluster.hierarchy import fcluster, linkage

from supclust.baselines import (KMeansConfig, agglomerate, centroid_linkage_sup, hierarchical,
                                kmeans, lloyd, relabel_first_occurrence, tseng_init)
from supclust.core import UsageError

from oracles import brute_centroid_agglomeration, same_partition


def blobs(seed=0, k=3, n=20, spread=0.5):
    rng = np.random.default_rng(seed)
    centers = np.array([[0, 0], [8, 0], [0, 8], [8, 8]][:k], dtype=float)
    x = np.concatenate([c + spread * rng.normal(size=(n, 2)) for c in centers])
    return x, np.repeat(np.arange(k), n)


# ---------------------------------------------------------------- k-means


def test_lloyd_one_dimensional_by_hand():
    x = np.array([[0.0], [1.0], [9.0], [10.0]])
    labels, centers, wss = lloyd(x, np.array([[0.0], [1.0]]))
    assert labels.tolist() == [0, 0, 1, 1]
    assert centers.ravel().tolist() == [0.5, 9.5]
    assert wss == pytest.approx(1.0)


def test_lloyd_withinss_never_increases():
    x, _ = blobs(2, k=4, spread=2.0)
    start = x[np.random.default_rng(1).choice(len(x), 4, replace=False)]
    *_, trace = lloyd(x, start, history=True)
    assert all(b <= a + 1e-9 for a, b in zip(trace, trace[1:]))


def test_empty_cluster_is_reseeded():
    x = np.array([[0.0], [0.1], [0.2], [10.0]])
    # the third centre is far from everything and starts empty
    labels, centers, _ = lloyd(x, np.array([[0.0], [10.0], [100.0]]))
    assert np.bincount(labels, minlength=3).min() >= 1


def test_kmeans_recovers_separated_blobs():
    x, truth = blobs(3)
    labels, _, _ = kmeans(x, KMeansConfig(k=3, n_init=10, seed=4))
    assert same_partition(labels, truth)


def test_kmeans_restarts_are_order_free_and_monotone():
    x, _ = blobs(5, k=4, spread=2.5)
    one = kmeans(x, KMeansConfig(k=4, n_init=1, seed=9))
    many = kmeans(x, KMeansConfig(k=4, n_init=20, seed=9))
    assert many[2] <= one[2]
    again = kmeans(x, KMeansConfig(k=4, n_init=20, seed=9))
    assert np.array_equal(many[0], again[0])


def test_kmeans_rejects_bad_config():
    with pytest.raises(UsageError):
        kmeans(np.zeros((3, 2)), KMeansConfig(k=5))
    with pytest.raises(UsageError):
        KMeansConfig(k=0)


def test_kdtree_and_dense_assignment_agree():
    rng = np.random.default_rng(8)
    x = rng.uniform(0, 50, size=(600, 2))
    start = x[:30]
    a = lloyd(x, start)
    # three-dimensional copy with a constant column takes the same tree path;
    # a four-dimensional one takes the dense path
    b = lloyd(np.column_stack([x, np.zeros((600, 2))]), np.column_stack([start, np.zeros((30, 2))]))
    assert np.array_equal(a[0], b[0])
    assert a[2] == pytest.approx(b[2], rel=1e-10)


# ---------------------------------------------------------------- hierarchical


@pytest.mark.parametrize("method", ["single", "complete"])
def test_agglomeration_matches_scipy(method):
    rng = np.random.default_rng(21)
    for _ in range(20):
        x = rng.normal(size=(int(rng.integers(3, 25)), 2))
        ref = linkage(x, method)
        tree = agglomerate(x, method)
        assert np.allclose(sorted(d for _, _, d in tree.merges), ref[:, 2])
        for k in (1, 2, 3):
            got = hierarchical(x, method, k)
            assert same_partition(got, fcluster(ref, k, "maxclust"))


def test_centroid_agglomeration_matches_brute_force():
    rng = np.random.default_rng(22)
    for _ in range(30):
        x = rng.normal(size=(int(rng.integers(2, 12)), 2))
        hist = brute_centroid_agglomeration(x)
        tree = agglomerate(x, "centroid")
        assert np.allclose([d for _, _, d in tree.merges], [d for d, _ in hist])


def test_cut_labels_numbered_by_first_occurrence():
    assert relabel_first_occurrence([7, 7, 3, 9, 3]).tolist() == [0, 0, 1, 2, 1]
    x = np.array([[10.0], [0.0], [0.1], [10.1]])
    assert hierarchical(x, "single", 2).tolist() == [0, 1, 1, 0]


def test_tie_merges_lowest_slots_first():
    x = np.array([[0.0], [1.0], [2.0], [3.0]])
    tree = agglomerate(x, "single")
    assert tree.merges[0][:2] == (0, 1)
    assert tree.merges[1][:2] == (0, 2)


def test_tseng_init_takes_largest_groups():
    x = np.array([[0.0], [0.5], [3.0], [10.0], [11.0], [30.0]])
    # two-group cut: {0, 0.5, 3, 10, 11} and {30}
    centers = tseng_init(x, 2, 1, "single")
    assert np.allclose(centers.ravel(), [4.9, 30.0])
    # four-group cut {0, 0.5} {3} {10, 11} {30}: the size tie goes to the
    # group formed first
    centers = tseng_init(x, 2, 2, "single")
    assert np.allclose(centers.ravel(), [0.25, 10.5])
    with pytest.raises(UsageError):
        tseng_init(x, 4, 2)


def test_kmeans_with_tseng_start():
    x, truth = blobs(6)
    labels, _, _ = kmeans(x, KMeansConfig(k=3, init="tseng", tseng_p=2, tseng_linkage="single"))
    assert same_partition(labels, truth)


# ---------------------------------------------------------------- centroid-linkage SUP


def test_centroid_linkage_sup_worked_example():
    tree = centroid_linkage_sup(np.array([0.0, 1.0, 3.0, 7.0]))
    assert tree.distances == pytest.approx([1.0, 2.5, 17 / 3])
    assert [float(e.centroid[0]) for e in tree.events] == pytest.approx([0.5, 4 / 3, 2.75])
    assert tree.cut(2).tolist() == [0, 0, 0, 1]


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 12), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_centroid_linkage_sup_equals_agglomeration(n, p, seed):
    x = np.random.default_rng(seed).normal(size=(n, p))
    hist = brute_centroid_agglomeration(x)
    tree = centroid_linkage_sup(x)
    assert np.allclose(tree.distances, [d for d, _ in hist], rtol=1e-9, atol=1e-12)
    parts = tree.partitions()[1:]
    for part, (_, groups) in zip(parts, hist):
        assert sorted(sorted(g) for g in part) == groups


def test_coincident_points_start_together():
    tree = centroid_linkage_sup(np.array([[0.0], [0.0], [4.0]]))
    assert len(tree.events) == 1
    assert tree.events[0].distance == 4.0
