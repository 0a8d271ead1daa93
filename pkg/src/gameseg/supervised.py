"""Rank segments and per-player efficiency classes."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .dataset import Dataset

CLASSES = ("High", "Medium", "Low")


@dataclass(frozen=True)
class RankSegments:
    """Half-open rank intervals ``[lo, hi)``; High holds the lowest ranks."""

    r_high: tuple[int, int]
    r_medium: tuple[int, int]
    r_low: tuple[int, int]

    def as_dict(self) -> dict:
        return {"High": self.r_high, "Medium": self.r_medium, "Low": self.r_low}

    def classify(self, ranks) -> np.ndarray:
        """Class index (0=High, 1=Medium, 2=Low) for each rank; -1 outside the cover."""
        ranks = np.asarray(ranks)
        out = np.full(ranks.shape, -1, dtype=np.int64)
        for i, (lo, hi) in enumerate((self.r_high, self.r_medium, self.r_low)):
            out[(ranks >= lo) & (ranks < hi)] = i
        return out


def build_segments(ranks, mode: str = "width") -> RankSegments:
    """Split the observed rank range into three contiguous segments.

    ``mode="width"`` gives equal rank widths, with the remainder going to High
    first, then Medium. ``mode="tertile"`` cuts at the 1/3 and 2/3 quantiles of
    the supplied ranks instead.
    """
    ranks = np.asarray(list(ranks))
    if ranks.size == 0:
        raise ValueError("no ranks given")
    if len(np.unique(ranks)) < 3:
        raise ValueError("fewer than 3 distinct ranks; segments would be degenerate")
    lo, hi = int(ranks.min()), int(ranks.max())
    if mode == "width":
        width = hi - lo + 1
        base, rem = divmod(width, 3)
        w_high = base + (rem >= 1)
        w_med = base + (rem >= 2)
        a, b = lo + w_high, lo + w_high + w_med
    elif mode == "tertile":
        q1, q2 = np.quantile(ranks, [1 / 3, 2 / 3], method="lower")
        a = int(q1) + 1
        b = max(int(q2) + 1, a + 1)
        b = min(b, hi)
        a = min(a, b - 1)
    else:
        raise ValueError(f"unknown segment mode {mode!r}")
    return RankSegments((lo, a), (a, b), (b, hi + 1))


@dataclass(frozen=True)
class ClassAssignment:
    classes: dict
    counts: dict
    n_i: dict
    median_rank: dict

    def members(self, cls: str) -> list:
        return [p for p, c in self.classes.items() if c == cls]

    def rows(self) -> list[tuple]:
        return [
            (p, self.classes[p], *self.counts[p], self.n_i[p], self.median_rank[p])
            for p in sorted(self.classes)
        ]

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["player_id", "class", "count_high", "count_medium", "count_low", "n_i", "overall_median_rank"])
            for row in self.rows():
                w.writerow(row)
        return path

    @classmethod
    def from_csv(cls, path) -> "ClassAssignment":
        frame = pd.read_csv(path, dtype={"player_id": str})
        classes, counts, n_i, med = {}, {}, {}, {}
        for r in frame.itertuples(index=False):
            classes[r.player_id] = r[1]
            counts[r.player_id] = (int(r.count_high), int(r.count_medium), int(r.count_low))
            n_i[r.player_id] = int(r.n_i)
            med[r.player_id] = float(r.overall_median_rank)
        return cls(classes, counts, n_i, med)


def assign_players(ds: Dataset, segs: RankSegments) -> ClassAssignment:
    """Put each player in the class whose segment holds most of their records.

    Ties go to the more efficient class (High before Medium before Low).
    """
    frame = ds.frame
    if frame.empty:
        raise ValueError("dataset has no records")
    seg = segs.classify(frame["rank"].to_numpy())
    if np.any(seg < 0):
        raise ValueError("record rank outside the segment cover")
    classes, counts, n_i, med = {}, {}, {}, {}
    for pid, idx in frame.groupby("player_id", sort=True).indices.items():
        if len(idx) == 0:
            raise ValueError(f"player {pid!r} has no records")
        c = np.bincount(seg[idx], minlength=3)
        classes[pid] = CLASSES[int(np.argmax(c))]
        counts[pid] = tuple(int(v) for v in c)
        n_i[pid] = int(len(idx))
        med[pid] = float(np.median(frame["rank"].to_numpy()[idx]))
    return ClassAssignment(classes, counts, n_i, med)


def representative_player(ds: Dataset, ca: ClassAssignment, cls: str):
    """Class member whose overall median rank is the class median.

    Members are ordered by (median rank, player id); even-sized classes take
    the lower of the two middle players.
    """
    members = ca.members(cls)
    if not members:
        raise ValueError(f"class {cls!r} is empty")
    members.sort(key=lambda p: (ca.median_rank[p], str(p)))
    return members[(len(members) - 1) // 2]
