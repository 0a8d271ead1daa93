"""Matrix similarity and transfer of class labels onto clusters."""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .glasso import CorrelationMatrix

SUPERVISED_ONLY = ("points", "rank")


def _mat(a) -> np.ndarray:
    return np.asarray(a.values if isinstance(a, CorrelationMatrix) else a, dtype=float)


def _check_pair(a, b):
    if isinstance(a, CorrelationMatrix) and isinstance(b, CorrelationMatrix) and a.labels != b.labels:
        raise ValueError("matrices have different labels or label order")
    A, B = _mat(a), _mat(b)
    if A.shape != B.shape or A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"need equal square matrices, got {A.shape} and {B.shape}")
    return A, B


def matrix_pearson(a, b) -> float:
    """Pearson correlation of the strict upper triangles of ``a`` and ``b``."""
    A, B = _check_pair(a, b)
    iu = np.triu_indices(A.shape[0], k=1)
    u, v = A[iu], B[iu]
    u, v = u - u.mean(), v - v.mean()
    den = np.sqrt((u @ u) * (v @ v))
    if u.size < 2 or den <= 1e-300:
        raise ValueError("off-diagonal entries are constant; Pearson similarity undefined")
    return float(np.clip((u @ v) / den, -1.0, 1.0))


def rv_coefficient(a, b) -> float:
    """``tr(AB) / sqrt(tr(AA) tr(BB))`` for symmetric ``a`` and ``b``."""
    A, B = _check_pair(a, b)
    if not (np.allclose(A, A.T) and np.allclose(B, B.T)):
        raise ValueError("RV coefficient needs symmetric matrices")
    # tr(XY) == sum(X * Y) for symmetric inputs
    aa, bb = float(np.sum(A * A)), float(np.sum(B * B))
    if aa == 0.0 or bb == 0.0:
        raise ValueError("RV coefficient undefined for a zero matrix")
    return float(np.sum(A * B) / np.sqrt(aa * bb))


METRICS = {"pearson": matrix_pearson, "rv": rv_coefficient}


@dataclass(frozen=True)
class SimilarityMatrix:
    values: np.ndarray
    metric: str
    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([self.metric, *self.col_labels])
            for label, row in zip(self.row_labels, self.values):
                w.writerow([label, *(repr(float(v)) for v in row)])
        return path


@dataclass(frozen=True)
class LabelMapping:
    mapping: dict
    argmax_scores: dict
    metric: str
    similarity: SimilarityMatrix
    conflict: bool = False

    def as_json(self) -> dict:
        return {
            str(c): {"class": self.mapping[c], "score": self.argmax_scores[c], "metric": self.metric}
            for c in self.mapping
        }


def similarity_matrix(sup_mats: dict, unsup_mats: dict, metric: str = "rv") -> SimilarityMatrix:
    fn = METRICS[metric]
    rows, cols = tuple(sup_mats), tuple(unsup_mats)
    vals = np.array([[fn(sup_mats[r], unsup_mats[c]) for c in cols] for r in rows])
    return SimilarityMatrix(vals, metric, tuple(map(str, rows)), tuple(map(str, cols)))


def align(sup_mats: dict, unsup_mats: dict, drop=SUPERVISED_ONLY):
    """Restrict all matrices to their shared labels, in the first matrix's order.

    ``drop`` lists labels removed from the supervised matrices beforehand.
    """
    sup = {k: m.drop(drop) for k, m in sup_mats.items()}
    every = list(sup.values()) + list(unsup_mats.values())
    common = set(every[0].labels)
    for m in every[1:]:
        common &= set(m.labels)
    order = tuple(l for l in every[0].labels if l in common)
    if len(order) < 2:
        raise ValueError("fewer than two shared features between groups")
    return {k: m.select(order) for k, m in sup.items()}, {k: m.select(order) for k, m in unsup_mats.items()}


def transfer_labels(sup_mats: dict, unsup_mats: dict, metric: str = "rv") -> LabelMapping:
    """Name each cluster after the class whose matrix it most resembles.

    ``sup_mats`` maps class names and ``unsup_mats`` cluster ids to matrices
    sharing one feature order (see :func:`align`). Each column takes its
    argmax row; if two columns pick the same class, the permutation with the
    largest total similarity is used instead and ``conflict`` is set.
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    if len(sup_mats) != len(unsup_mats):
        raise ValueError("need as many clusters as classes")
    sim = similarity_matrix(sup_mats, unsup_mats, metric)
    V = sim.values
    if np.ptp(V) <= 1e-12:
        raise ValueError("similarity matrix is degenerate (all entries equal)")
    classes, clusters = list(sup_mats), list(unsup_mats)
    pick = np.argmax(V, axis=0)
    conflict = len(set(pick.tolist())) != len(pick)
    if conflict:
        best, best_total = None, -np.inf
        for perm in itertools.permutations(range(len(classes))):
            total = sum(V[perm[j], j] for j in range(len(clusters)))
            if total > best_total + 1e-15:
                best, best_total = perm, total
        pick = np.array(best)
    mapping = {c: classes[pick[j]] for j, c in enumerate(clusters)}
    scores = {c: float(V[pick[j], j]) for j, c in enumerate(clusters)}
    return LabelMapping(mapping, scores, metric, sim, conflict)
