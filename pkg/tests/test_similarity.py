import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from gameseg.dataset import FeatureMatrix
from gameseg.glasso import CorrelationMatrix, pearson_matrix
from gameseg.similarity import (
    align,
    matrix_pearson,
    rv_coefficient,
    similarity_matrix,
    transfer_labels,
)


def rand_corr(S, rng, n=400):
    L = rng.standard_normal((S, S)) * rng.uniform(0.2, 1.5, S)
    Y = rng.standard_normal((n, S)) @ L.T
    return np.corrcoef(Y, rowvar=False)


def cm(values, labels=None):
    values = np.asarray(values, dtype=float)
    labels = labels or tuple(f"v{i}" for i in range(len(values)))
    return CorrelationMatrix(values, tuple(labels))


def test_pearson_self_and_negation():
    A = rand_corr(5, np.random.default_rng(0))
    assert matrix_pearson(A, A) == pytest.approx(1.0, abs=1e-12)
    assert matrix_pearson(A, -A) == pytest.approx(-1.0, abs=1e-12)


def test_pearson_upper_triangle_by_hand():
    A = np.array([[1, 0.1, 0.2, 0.3], [0.1, 1, 0.4, 0.5], [0.2, 0.4, 1, 0.6], [0.3, 0.5, 0.6, 1]])
    B = np.array([[1, 0.6, -0.1, 0.0], [0.6, 1, 0.2, 0.9], [-0.1, 0.2, 1, 0.3], [0.0, 0.9, 0.3, 1]])
    u = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6]
    v = [0.6, -0.1, 0.0, 0.2, 0.9, 0.3]
    mu, mv = sum(u) / 6, sum(v) / 6
    num = sum((a - mu) * (b - mv) for a, b in zip(u, v))
    den = math.sqrt(sum((a - mu) ** 2 for a in u) * sum((b - mv) ** 2 for b in v))
    assert matrix_pearson(A, B) == pytest.approx(num / den, abs=1e-12)
    # the diagonal does not enter
    B2 = B.copy()
    np.fill_diagonal(B2, 7.0)
    assert matrix_pearson(A, B2) == pytest.approx(num / den, abs=1e-12)


def test_pearson_constant_offdiag_raises():
    with pytest.raises(ValueError):
        matrix_pearson(np.eye(3), rand_corr(3, np.random.default_rng(1)))


def test_rv_examples():
    I = np.eye(2)
    assert rv_coefficient(I, I) == pytest.approx(1.0, abs=1e-12)
    A = rand_corr(4, np.random.default_rng(2))
    assert rv_coefficient(A, 3.7 * A) == pytest.approx(1.0, abs=1e-12)
    B = np.array([[1.0, 1.0], [1.0, 1.0]])
    want = np.trace(I @ B) / math.sqrt(np.trace(I @ I) * np.trace(B @ B))
    assert rv_coefficient(I, B) == pytest.approx(want, abs=1e-12)
    C = np.array([[1.0, 0.0], [0.0, 2.0]])
    assert rv_coefficient(I, C) == pytest.approx(3 / math.sqrt(2 * 5), abs=1e-12)
    # tr(AB) = 2, tr(AA) = 2, tr(BB) = 2.5
    H = np.array([[1.0, 0.5], [0.5, 1.0]])
    assert abs(rv_coefficient(I, H) - 2 / math.sqrt(5)) <= 1e-12


def test_rv_rejects_bad_input():
    with pytest.raises(ValueError):
        rv_coefficient(np.zeros((2, 2)), np.eye(2))
    with pytest.raises(ValueError):
        rv_coefficient(np.array([[1.0, 2.0], [0.0, 1.0]]), np.eye(2))
    with pytest.raises(ValueError):
        rv_coefficient(np.eye(2), np.eye(3))


def test_label_order_mismatch_raises():
    A = cm(np.eye(2), ("a", "b"))
    B = cm(np.eye(2), ("b", "a"))
    with pytest.raises(ValueError):
        rv_coefficient(A, B)


psd = hnp.arrays(np.float64, st.tuples(st.integers(2, 6), st.integers(1, 8)), elements=st.floats(-5, 5))


@given(psd, psd)
def test_rv_bounds_and_symmetry(F, G):
    if F.shape[0] != G.shape[0]:
        return
    A, B = F @ F.T, G @ G.T
    if np.sum(A * A) < 1e-12 or np.sum(B * B) < 1e-12:
        return
    r = rv_coefficient(A, B)
    assert -1e-12 <= r <= 1 + 1e-12
    assert r == pytest.approx(rv_coefficient(B, A), abs=1e-12)


@given(st.integers(0, 10_000), st.integers(3, 7))
def test_pearson_symmetry_and_bounds(seed, S):
    rng = np.random.default_rng(seed)
    A, B = rand_corr(S, rng, n=50), rand_corr(S, rng, n=50)
    p = matrix_pearson(A, B)
    assert -1 <= p <= 1
    assert p == pytest.approx(matrix_pearson(B, A), abs=1e-12)


def three_groups(seed, S=6, noise=0.05):
    rng = np.random.default_rng(seed)
    labels = tuple(f"f{i}" for i in range(S))
    sup = {c: cm(rand_corr(S, rng), labels) for c in ("High", "Medium", "Low")}
    truth = dict(zip((1, 2, 3), rng.permutation(list(sup))))
    unsup = {}
    for j, c in truth.items():
        E = rng.normal(0, noise, (S, S))
        V = sup[c].values + (E + E.T) / 2
        np.fill_diagonal(V, 1.0)
        unsup[j] = cm(V, labels)
    return sup, unsup, truth


@pytest.mark.parametrize("metric", ["rv", "pearson"])
def test_transfer_recovers_planted_mapping(metric):
    for seed in range(10):
        sup, unsup, truth = three_groups(seed)
        m = transfer_labels(sup, unsup, metric)
        assert m.mapping == truth
        assert sorted(m.mapping.values()) == sorted(sup)


@given(st.integers(0, 10_000), st.permutations([1, 2, 3]))
def test_transfer_permutation_equivariant(seed, order):
    sup, unsup, _ = three_groups(seed, noise=0.02)
    a = transfer_labels(sup, unsup).mapping
    b = transfer_labels(sup, {j: unsup[j] for j in order}).mapping
    assert a == b
    assert len(set(a.values())) == 3


def test_transfer_conflict_resolution(monkeypatch):
    from gameseg import similarity as simmod

    I = cm(np.eye(3))
    sup = {"High": I, "Medium": I, "Low": I}
    # clusters 1 and 2 both prefer High
    V = np.array([[0.9, 0.8, 0.1], [0.5, 0.1, 0.2], [0.1, 0.2, 0.7]])
    monkeypatch.setattr(
        simmod, "similarity_matrix", lambda s, u, metric="rv": simmod.SimilarityMatrix(V, metric, tuple(s), tuple(map(str, u)))
    )
    m = transfer_labels(sup, {1: I, 2: I, 3: I})
    assert m.conflict
    best = max(itertools.permutations(range(3)), key=lambda p: sum(V[p[j], j] for j in range(3)))
    assert m.mapping == {j + 1: ["High", "Medium", "Low"][best[j]] for j in range(3)}
    assert m.mapping == {1: "Medium", 2: "High", 3: "Low"}


def test_transfer_degenerate_and_size_errors():
    I = cm(np.eye(3))
    with pytest.raises(ValueError):
        transfer_labels({"High": I, "Medium": I, "Low": I}, {1: I, 2: I, 3: I})
    with pytest.raises(ValueError):
        transfer_labels({"High": I, "Medium": I}, {1: I, 2: I, 3: I})
    with pytest.raises(ValueError):
        transfer_labels({"High": I}, {1: I}, metric="cosine")


def test_similarity_matrix_csv(tmp_path):
    sup, unsup, _ = three_groups(3)
    sim = similarity_matrix(sup, unsup, "rv")
    assert sim.values.shape == (3, 3)
    text = sim.to_csv(tmp_path / "s.csv").read_text().splitlines()
    assert text[0] == "rv,1,2,3"
    assert text[1].startswith("High,")


def test_align_drops_supervised_only_features():
    rng = np.random.default_rng(4)
    sup_fm = FeatureMatrix.from_array(rng.standard_normal((100, 4)), ("a", "b", "points", "rank"))
    uns_fm = FeatureMatrix.from_array(rng.standard_normal((100, 3)), ("b", "a", "c"))
    s, u = align({"High": pearson_matrix(sup_fm)}, {1: pearson_matrix(uns_fm)})
    assert s["High"].labels == ("a", "b") == u[1].labels
    assert u[1].values[0, 1] == pytest.approx(pearson_matrix(uns_fm).values[1, 0])
