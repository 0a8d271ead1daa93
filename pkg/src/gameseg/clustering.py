"""Minibatch k-means with elbow and silhouette model selection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import FeatureMatrix

DEFAULT_BATCH = 1024
DEFAULT_MAX_ITER = 100
SILHOUETTE_SAMPLE = 20000
LOW_CONFIDENCE_RATIO = 0.25


@dataclass(frozen=True)
class ClusterAssignment:
    k: int
    centers: np.ndarray
    labels: np.ndarray
    distortion: float
    silhouette: float | None
    seed: int
    empty: tuple[int, ...] = ()
    history: tuple[float, ...] = ()


def _as_array(data) -> np.ndarray:
    X = data.values if isinstance(data, FeatureMatrix) else data
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return X


def _sq_dists(X, C):
    d = (X * X).sum(1)[:, None] - 2.0 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _assign(X, C):
    # argmin returns the first minimum, so ties go to the lowest center index
    d = _sq_dists(X, C)
    labels = np.argmin(d, axis=1)
    return labels, d[np.arange(len(X)), labels]


def distortion(X, centers, labels) -> float:
    X = _as_array(X)
    diff = X - np.asarray(centers)[labels]
    return float((diff * diff).sum())


def kmeans_pp(X, k, rng) -> np.ndarray:
    """Distance-proportional seeding; falls back to uniform draws once all mass is zero."""
    n = len(X)
    chosen = [int(rng.integers(n))]
    closest = _sq_dists(X, X[chosen])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            free = np.setdiff1d(np.arange(n), chosen)
            idx = int(rng.choice(free))
        chosen.append(idx)
        closest = np.minimum(closest, _sq_dists(X, X[idx : idx + 1])[:, 0])
    return X[chosen].copy()


def minibatch_kmeans(
    fm,
    k: int,
    batch: int | None = None,
    seed: int = 0,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = 1e-10,
    n_init: int = 3,
    silhouette_sample: int = SILHOUETTE_SAMPLE,
    compute_silhouette: bool = True,
    init=None,
) -> ClusterAssignment:
    """Cluster rows of ``fm`` with minibatch k-means.

    Centers are seeded k-means++-style and moved towards each minibatch with
    per-center learning rate ``1 / count``. Counts accumulate across batches;
    with ``batch == N`` they restart every iteration, which makes each step an
    exact Lloyd update. After the last batch all points are assigned, centers
    are set to their cluster means and the distortion is recomputed. The best
    of ``n_init`` seeded runs (lowest distortion) is returned. ``init`` gives
    explicit starting centers (k rows) and replaces the seeded restarts.
    """
    X = _as_array(fm)
    n = len(X)
    if n == 0:
        raise ValueError("empty feature matrix")
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= N, got k={k}, N={n}")
    batch = min(DEFAULT_BATCH, n) if batch is None else int(batch)
    if not 1 <= batch <= n:
        raise ValueError(f"batch must be in [1, N], got {batch}")
    if init is not None:
        init = np.array(init, dtype=float).reshape(k, X.shape[1])
    root = np.random.SeedSequence(seed)
    best = None
    for child in root.spawn(1 if init is not None else max(1, n_init)):
        run = _single_run(X, k, batch, np.random.Generator(np.random.PCG64(child)), max_iter, tol, init)
        if best is None or run[2] < best[2]:
            best = run
    centers, labels, dist, empty, history = best
    sil = None
    if compute_silhouette and k >= 2 and len(np.unique(labels)) >= 2:
        sil = silhouette_score(X, labels, sample_size=silhouette_sample, seed=seed)
    return ClusterAssignment(k, centers, labels, dist, sil, seed, empty, history)


def _single_run(X, k, batch, rng, max_iter, tol, init=None):
    n = len(X)
    centers = kmeans_pp(X, k, rng) if init is None else init.copy()
    counts = np.zeros(k)
    full = batch == n
    history = []
    for _ in range(max_iter):
        idx = np.arange(n) if full else np.sort(rng.choice(n, size=batch, replace=False))
        M = X[idx]
        lab, _ = _assign(M, centers)
        if full:
            history.append(float(((M - centers[lab]) ** 2).sum()))
            counts[:] = 0
        sums = np.zeros_like(centers)
        np.add.at(sums, lab, M)
        nb = np.bincount(lab, minlength=k).astype(float)
        hit = nb > 0
        new = centers.copy()
        new[hit] = (counts[hit, None] * centers[hit] + sums[hit]) / (counts[hit] + nb[hit])[:, None]
        counts += nb
        shift = float(((new - centers) ** 2).sum())
        centers = new
        if shift <= tol:
            break
    labels, _ = _assign(X, centers)
    empty = []
    for c in range(k):
        members = labels == c
        if members.any():
            centers[c] = X[members].mean(axis=0)
        else:
            empty.append(c)
    dist = distortion(X, centers, labels)
    if full:
        history.append(dist)
    return centers, labels, dist, tuple(empty), tuple(history)


def silhouette_score(fm, labels, sample_size: int | None = SILHOUETTE_SAMPLE, seed: int = 0, chunk: int = 2048) -> float:
    """Mean silhouette ``(b - a) / max(a, b)`` with Euclidean distances.

    Points alone in their cluster score 0, as do points with ``a = b = 0``.
    When there are more than ``sample_size`` rows, a seeded subsample is
    scored against itself.
    """
    X = _as_array(fm)
    labels = np.asarray(labels)
    if len(labels) != len(X):
        raise ValueError("labels and rows differ in length")
    if sample_size is not None and len(X) > sample_size:
        rng = np.random.Generator(np.random.PCG64(seed))
        keep = np.sort(rng.choice(len(X), size=sample_size, replace=False))
        X, labels = X[keep], labels[keep]
    uniq, lab = np.unique(labels, return_inverse=True)
    if len(uniq) < 2:
        raise ValueError("silhouette is undefined for a single cluster")
    sizes = np.bincount(lab).astype(float)
    onehot = np.zeros((len(X), len(uniq)))
    onehot[np.arange(len(X)), lab] = 1.0
    scores = np.empty(len(X))
    for lo in range(0, len(X), chunk):
        hi = min(lo + chunk, len(X))
        D = np.sqrt(_sq_dists(X[lo:hi], X))
        sums = D @ onehot
        own = lab[lo:hi]
        rows = np.arange(hi - lo)
        own_size = sizes[own]
        a = np.where(own_size > 1, sums[rows, own] / np.maximum(own_size - 1, 1), 0.0)
        means = sums / sizes
        means[rows, own] = np.inf
        b = means.min(axis=1)
        denom = np.maximum(a, b)
        s = np.where(denom > 0, (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
        scores[lo:hi] = np.where(own_size > 1, s, 0.0)
    return float(np.clip(scores.mean(), -1.0, 1.0))


@dataclass(frozen=True)
class ElbowResult:
    ks: tuple[int, ...]
    distortions: tuple[float, ...]
    suggested_k: int | None
    curvature_ratio: float | None
    low_confidence: bool


def elbow_from_curve(ks, dists, threshold: float = LOW_CONFIDENCE_RATIO) -> ElbowResult:
    """Elbow = interior k with the largest discrete second difference.

    The confidence statistic is that second difference divided by the total
    drop of the curve; below ``threshold`` the suggestion is marked low
    confidence. Fewer than three points give no suggestion.
    """
    ks, d = tuple(int(k) for k in ks), np.asarray(dists, dtype=float)
    if len(ks) < 3:
        return ElbowResult(ks, tuple(map(float, d)), None, None, True)
    second = d[:-2] - 2 * d[1:-1] + d[2:]
    i = int(np.argmax(second))
    drop = d[0] - d[-1]
    ratio = float(second[i] / drop) if drop > 0 else 0.0
    return ElbowResult(ks, tuple(map(float, d)), ks[i + 1], ratio, ratio < threshold)


def elbow_scan(fm, k_range, seed: int = 0, **kw) -> tuple[ElbowResult, dict]:
    """Distortion curve over ``k_range`` and the suggested elbow.

    Returns the elbow result and the fitted assignments keyed by k.
    """
    ks = [int(k) for k in k_range]
    if not ks or ks != sorted(ks) or ks[0] < 1:
        raise ValueError("k_range must be ascending with min >= 1")
    fits = {k: minibatch_kmeans(fm, k, seed=seed, **kw) for k in ks}
    return elbow_from_curve(ks, [fits[k].distortion for k in ks]), fits


@dataclass(frozen=True)
class KSelection:
    k: int
    silhouettes: dict
    elbow: ElbowResult | None
    forced: bool
    disagreement: bool
    fits: dict


def best_k(silhouettes: dict, tie: float = 1e-12) -> int:
    """Largest silhouette; values within ``tie`` of the best go to the smaller k."""
    top = max(silhouettes.values())
    return min(k for k, v in silhouettes.items() if v >= top - tie)


def select_k(fm, k_range, seed: int = 0, **kw) -> KSelection:
    """Choose k by maximum silhouette over ``k >= 2``; the elbow is advisory.

    Silhouette ties within 1e-12 go to the smaller k. A single-element
    ``k_range`` is used as-is and reported as forced.
    """
    ks = [int(k) for k in k_range]
    if len(ks) == 1:
        fit = minibatch_kmeans(fm, ks[0], seed=seed, **kw)
        sil = {ks[0]: fit.silhouette} if fit.silhouette is not None else {}
        return KSelection(ks[0], sil, None, True, False, {ks[0]: fit})
    elbow, fits = elbow_scan(fm, ks, seed=seed, **kw)
    sil = {k: f.silhouette for k, f in fits.items() if k >= 2 and f.silhouette is not None}
    if not sil:
        raise ValueError("no k >= 2 with a computable silhouette")
    k = best_k(sil)
    disagree = elbow.suggested_k is not None and elbow.suggested_k != k
    return KSelection(k, sil, elbow, False, disagree, fits)
