import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from gameseg.clustering import (
    best_k,
    distortion,
    elbow_from_curve,
    elbow_scan,
    minibatch_kmeans,
    select_k,
    silhouette_score,
)
from gameseg.dataset import FeatureMatrix
from oracles import best_two_partition, silhouette_direct


def blobs(k, n_per=500, S=4, sep=8.0, seed=0):
    rng = np.random.default_rng(seed)
    # orthonormal directions put every pair of centers exactly sep apart
    Q, _ = np.linalg.qr(rng.standard_normal((S, S)))
    centers = sep / np.sqrt(2) * Q[:k]
    X = np.vstack([c + rng.standard_normal((n_per, S)) for c in centers])
    return X, np.repeat(np.arange(k), n_per)


def test_k1_center_is_mean():
    X = np.random.default_rng(0).standard_normal((200, 3))
    ca = minibatch_kmeans(X, 1)
    np.testing.assert_allclose(ca.centers[0], X.mean(axis=0), atol=1e-12)
    assert ca.distortion == pytest.approx(X.var(axis=0).sum() * len(X), rel=1e-10)
    assert ca.silhouette is None


def test_k_equals_n_zero_distortion():
    X = np.random.default_rng(1).standard_normal((12, 2))
    ca = minibatch_kmeans(X, 12)
    assert ca.distortion == pytest.approx(0.0, abs=1e-20)


def test_1d_example_matches_partition_oracle():
    X = np.array([[0.0], [0.1], [10.0], [10.1]])
    best, labels = best_two_partition(X)
    ca = minibatch_kmeans(X, 2, seed=0)
    got = sorted(ca.centers[:, 0])
    assert got == pytest.approx([0.05, 10.05], abs=1e-6)
    assert ca.distortion == pytest.approx(best, abs=1e-12)
    assert ca.labels[0] == ca.labels[1] != ca.labels[2] == ca.labels[3]
    assert (labels[0] == labels[1]) and (labels[2] == labels[3])


def test_errors():
    with pytest.raises(ValueError):
        minibatch_kmeans(np.zeros((3, 2)), 4)
    with pytest.raises(ValueError):
        minibatch_kmeans(np.zeros((0, 2)), 1)


def test_seed_determinism_and_fields():
    X, _ = blobs(3, n_per=300, seed=2)
    fm = FeatureMatrix.from_array(X)
    a = minibatch_kmeans(fm, 3, seed=5)
    b = minibatch_kmeans(fm, 3, seed=5)
    np.testing.assert_array_equal(a.labels, b.labels)
    np.testing.assert_array_equal(a.centers, b.centers)
    assert a.distortion == b.distortion and a.silhouette == b.silhouette
    assert np.all(a.labels < 3)
    assert distortion(fm.values, a.centers, a.labels) == pytest.approx(a.distortion, abs=1e-8)
    for c in range(3):
        assert (a.labels == c).any() or c in a.empty


def test_full_batch_distortion_monotone():
    X, _ = blobs(4, n_per=100, S=3, sep=3.0, seed=3)
    for seed in range(5):
        ca = minibatch_kmeans(X, 4, batch=len(X), seed=seed, n_init=1)
        h = np.array(ca.history)
        assert len(h) >= 2
        assert np.all(np.diff(h) <= 1e-9 * h[0])


def test_label_permutation_invariance():
    X, _ = blobs(3, n_per=100, seed=4)
    ca = minibatch_kmeans(X, 3, seed=0)
    perm = np.array([2, 0, 1])
    relabeled = perm[ca.labels]
    centers = np.empty_like(ca.centers)
    centers[perm] = ca.centers
    assert distortion(X, centers, relabeled) == pytest.approx(ca.distortion, rel=1e-12)
    assert silhouette_score(X, relabeled) == pytest.approx(silhouette_score(X, ca.labels), abs=1e-12)


def test_silhouette_examples():
    X = np.array([[0.0, 0], [0, 0.01], [100, 0], [100, 0.01]])
    assert silhouette_score(X, np.array([0, 0, 1, 1])) > 0.95
    assert silhouette_score(np.zeros((6, 2)), np.array([0, 0, 0, 1, 1, 1])) == 0.0
    with pytest.raises(ValueError):
        silhouette_score(X, np.zeros(4, dtype=int))


def test_silhouette_matches_direct_formula():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((60, 3))
    labels = rng.integers(0, 3, 60)
    labels[0] = 3  # a singleton cluster
    assert silhouette_score(X, labels, chunk=7) == pytest.approx(silhouette_direct(X, labels), abs=1e-9)


def test_silhouette_subsample_is_seeded():
    X, labels = blobs(3, n_per=400, seed=6)
    a = silhouette_score(X, labels, sample_size=500, seed=1)
    b = silhouette_score(X, labels, sample_size=500, seed=1)
    assert a == b
    assert abs(a - silhouette_score(X, labels, sample_size=None)) < 0.05


@given(
    hnp.arrays(np.float64, st.tuples(st.integers(4, 30), st.integers(1, 3)), elements=st.floats(-50, 50)),
    st.integers(0, 2**31),
)
def test_silhouette_bounds_property(X, seed):
    labels = np.random.default_rng(seed).integers(0, 3, len(X))
    if len(np.unique(labels)) < 2:
        return
    s = silhouette_score(X, labels)
    assert -1.0 <= s <= 1.0


def test_elbow_three_blobs():
    hits = 0
    for seed in range(10):
        X, _ = blobs(3, n_per=300, seed=seed)
        # raw coordinates: per-column scaling would distort the equal spacing
        elbow, fits = elbow_scan(X, range(1, 7), seed=seed, compute_silhouette=False)
        hits += elbow.suggested_k == 3
        assert len(fits) == 6
    assert hits >= 9


def test_elbow_single_blob_low_confidence():
    X = np.random.default_rng(7).standard_normal((2000, 4))
    elbow, _ = elbow_scan(X, range(1, 7), compute_silhouette=False)
    assert elbow.suggested_k is not None
    assert elbow.low_confidence


def test_elbow_withheld_for_two_points():
    elbow, _ = elbow_scan(np.random.default_rng(8).standard_normal((50, 2)), [1, 2])
    assert elbow.suggested_k is None
    assert len(elbow.distortions) == 2


def test_elbow_from_curve_arithmetic():
    e = elbow_from_curve([1, 2, 3, 4], [100.0, 40.0, 10.0, 8.0])
    # second differences: 30, 28 -> elbow at k=2
    assert e.suggested_k == 2
    assert e.curvature_ratio == pytest.approx(30 / 92)


@pytest.mark.parametrize("k", [2, 3])
def test_select_k_planted(k):
    X, _ = blobs(k, n_per=400, seed=k)
    sel = select_k(FeatureMatrix.from_array(X), [2, 3, 4, 5], seed=0)
    assert sel.k == k
    assert set(sel.silhouettes) == {2, 3, 4, 5}


def test_select_k_tie_rule():
    assert best_k({2: 0.5, 3: 0.5 + 1e-13, 4: 0.1}) == 2
    assert best_k({2: 0.5, 3: 0.6}) == 3


def test_select_k_forced():
    X, _ = blobs(2, n_per=100, seed=9)
    sel = select_k(X, [3])
    assert sel.k == 3 and sel.forced and sel.elbow is None


def test_partition_oracle_rate():
    """Full-batch runs from every distinct pair of starting points reach the
    exhaustive 2-partition optimum on >= 95% of small instances."""
    from itertools import combinations

    rng = np.random.default_rng(10)
    hits = trials = 0
    for _ in range(200):
        n = int(rng.integers(4, 13))
        X = rng.standard_normal((n, 2)) + (rng.random((n, 1)) < 0.5) * rng.normal(0, 3, 2)
        best, _ = best_two_partition(X)
        got = min(
            minibatch_kmeans(X, 2, batch=n, init=X[[i, j]], compute_silhouette=False).distortion
            for i, j in combinations(range(n), 2)
        )
        trials += 1
        hits += got <= best * (1 + 1e-9) + 1e-12
    assert hits / trials >= 0.95


def test_explicit_init_used():
    X = np.array([[0.0], [1.0], [10.0], [11.0]])
    ca = minibatch_kmeans(X, 2, batch=4, init=[[0.0], [1.0]])
    assert sorted(ca.centers[:, 0]) == pytest.approx([0.5, 10.5])
