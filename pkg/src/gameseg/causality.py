"""Pairwise Granger causality by nested OLS models and an F-test."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .dataset import Dataset, fill_missing
from .supervised import CLASSES, ClassAssignment, representative_player

DEFAULT_ALPHA = 0.05
DEFAULT_WINDOW = 15
MAX_BIC_LAG = 5

# Directed pairs of the published causality table, in canonical column names.
TABLE_PAIRS = (
    ("ceiling_fan_status", "ceiling_light_status"),
    ("humidity", "ceiling_fan_status"),
    ("desk_light_status", "ceiling_fan_status"),
    ("ceiling_light_status", "desk_light_status"),
    ("morning", "desk_light_status"),
    ("afternoon", "ceiling_fan_status"),
    ("evening", "ceiling_light_status"),
)


class RankDeficientError(np.linalg.LinAlgError):
    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(f"design is rank deficient; collinear column(s): {', '.join(map(str, self.columns))}")


def ols(design, y, names=None, rtol: float = 1e-10) -> tuple[np.ndarray, float]:
    """Least squares by Householder QR; returns ``(coefficients, RSS)``.

    A column whose QR pivot is below ``rtol`` times its own norm lies in the
    span of the columns before it and is reported by name.
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    if n <= p:
        raise ValueError(f"need more rows than columns, got {n}x{p}")
    names = list(names) if names is not None else list(range(p))
    Q, R = np.linalg.qr(X)
    norms = np.linalg.norm(X, axis=0)
    pivots = np.abs(np.diag(R))
    bad = [names[j] for j in range(p) if norms[j] == 0 or pivots[j] <= rtol * norms[j]]
    if bad:
        raise RankDeficientError(bad)
    coef = np.linalg.solve(R, Q.T @ y)
    resid = y - X @ coef
    return coef, float(resid @ resid)


def _betacf(a, b, x, eps=1e-16, max_iter=20000):
    # Modified Lentz evaluation of the incomplete-beta continued fraction.
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function ``I_x(a, b)``."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    log_front = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _betacf(b, a, 1.0 - x) / b


def f_tail(f: float, d1: int, d2: int) -> float:
    """Upper tail ``P[F(d1, d2) > f]``."""
    if d1 <= 0 or d2 <= 0:
        raise ValueError("degrees of freedom must be positive")
    if f < 0 or math.isnan(f):
        raise ValueError("f must be non-negative")
    if f == 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    x = d2 / (d2 + d1 * f)
    return min(1.0, max(0.0, betainc_reg(d2 / 2.0, d1 / 2.0, x)))


@dataclass(frozen=True)
class GrangerResult:
    cause: str
    effect: str
    lag: int
    f_statistic: float
    p_value: float
    n_effective: int
    alpha: float = DEFAULT_ALPHA
    degenerate: bool = False
    note: str = ""
    group: str | None = None

    @property
    def verdict(self) -> str:
        return "causal" if self.p_value < self.alpha else "not_causal"


def _lag_block(series, q, start):
    """Columns ``series[t-1], ..., series[t-q]`` for ``t >= start``."""
    n = len(series)
    return np.column_stack([series[start - i : n - i] for i in range(1, q + 1)])


def _segments_design(segments, q, trim=None):
    """Stack lagged rows of each ``(x, y)`` segment with per-segment intercepts."""
    trim = q if trim is None else trim
    ys, ylag, xlag, dummies = [], [], [], []
    usable = [(x, y) for x, y in segments if len(y) - trim > 0]
    for g, (x, y) in enumerate(usable):
        m = len(y) - trim
        ys.append(y[trim:])
        ylag.append(_lag_block(y, q, trim))
        xlag.append(_lag_block(x, q, trim))
        d = np.zeros((m, len(usable)))
        d[:, g] = 1.0
        dummies.append(d)
    return np.concatenate(ys), np.vstack(ylag), np.vstack(xlag), np.vstack(dummies)


def _prepare(segments):
    out = []
    for x, y in segments:
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        if x.shape != y.shape or x.ndim != 1:
            raise ValueError("x and y must be aligned 1-D series")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("series contain missing values")
        out.append((x, y))
    return out


def select_lag_bic(x, y, max_lag: int = MAX_BIC_LAG) -> int:
    """Lag in ``[1, max_lag]`` minimizing the BIC of the unrestricted model.

    All candidates are scored on the same rows (the first ``max_lag`` dropped).
    """
    (x, y), = _prepare([(x, y)])
    best, best_bic = 1, math.inf
    for q in range(1, max_lag + 1):
        Y, YL, XL, D = _segments_design([(x, y)], q, trim=max_lag)
        try:
            _, rss = ols(np.hstack([D, YL, XL]), Y)
        except (RankDeficientError, ValueError):
            continue
        n = len(Y)
        bic = n * math.log(max(rss, 1e-300) / n) + (2 * q + 1) * math.log(n)
        if bic < best_bic - 1e-12:
            best, best_bic = q, bic
    return best


def granger_segments(segments, lag: int = 1, alpha: float = DEFAULT_ALPHA, cause="x", effect="y") -> GrangerResult:
    """Granger F-test pooled over one or more aligned ``(x, y)`` segments.

    Each segment gets its own intercept; lags never cross segment borders.
    """
    segments = _prepare(segments)
    q = int(lag)
    if q < 1:
        raise ValueError("lag must be >= 1")
    segments = [(x, y) for x, y in segments if len(y) > 2 * q + 2]
    if not segments:
        raise ValueError(f"series too short for lag {q}")
    Y, YL, XL, D = _segments_design(segments, q)
    n = len(Y)
    k = D.shape[1]
    df2 = n - 2 * q - k
    if df2 < 1:
        raise ValueError(f"series too short for lag {q}")
    names_r = [f"intercept{g}" for g in range(k)] + [f"{effect}[t-{i}]" for i in range(1, q + 1)]
    names_u = names_r + [f"{cause}[t-{i}]" for i in range(1, q + 1)]
    try:
        _, rss_r = ols(np.hstack([D, YL]), Y, names_r)
        _, rss_u = ols(np.hstack([D, YL, XL]), Y, names_u)
    except RankDeficientError as exc:
        return GrangerResult(cause, effect, q, 0.0, 1.0, n, alpha, True, str(exc))
    if rss_u <= 1e-14 * max(rss_r, 1e-300):
        if rss_r <= 1e-14:
            return GrangerResult(cause, effect, q, 0.0, 1.0, n, alpha, True, "effect is fitted exactly")
        return GrangerResult(cause, effect, q, math.inf, 0.0, n, alpha, False, "unrestricted fit is exact")
    F = max(0.0, ((rss_r - rss_u) / q) / (rss_u / df2))
    return GrangerResult(cause, effect, q, F, f_tail(F, q, df2), n, alpha)


def granger_test(x, y, lag=1, alpha: float = DEFAULT_ALPHA, cause="x", effect="y") -> GrangerResult:
    """Test whether lags of ``x`` improve an autoregression of ``y``.

    ``lag`` is a positive integer or ``"bic"`` to pick it in ``[1, 5]``.
    """
    if lag == "bic":
        lag = select_lag_bic(x, y)
    return granger_segments([(x, y)], lag, alpha, cause, effect)


def player_series(ds: Dataset, player, columns, window: int = DEFAULT_WINDOW) -> pd.DataFrame:
    """One player's columns averaged over ``window``-minute bins, gaps dropped."""
    frame = ds.frame.loc[ds.frame["player_id"] == player, ["timestamp", "player_id", *columns]]
    frame = fill_missing(frame, columns)
    if window > 1:
        frame = frame.groupby(frame["timestamp"].dt.floor(f"{window}min"))[list(columns)].mean()
    else:
        frame = frame.set_index("timestamp")[list(columns)]
    return frame.dropna()


@dataclass(frozen=True)
class GrangerTable:
    results: tuple[GrangerResult, ...]
    pairs: tuple[tuple[str, str], ...]
    groups: tuple[str, ...]
    mode: str

    def cell(self, group, cause, effect) -> GrangerResult:
        for r in self.results:
            if r.group == group and r.cause == cause and r.effect == effect:
                return r
        raise KeyError((group, cause, effect))

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["class", "cause", "effect", "lag", "f_statistic", "p_value", "verdict", "n_effective", "degenerate"])
            for r in self.results:
                w.writerow([r.group, r.cause, r.effect, r.lag, repr(r.f_statistic), repr(r.p_value), r.verdict, r.n_effective, int(r.degenerate)])
        return path

    def format_text(self) -> str:
        """Fixed-width table with one row per class and (p, F) per pair."""
        head = ["Player type"] + [f"{c} => {e}" for c, e in self.pairs]
        rows = []
        for g in self.groups:
            cells = [g]
            for c, e in self.pairs:
                r = self.cell(g, c, e)
                p = "<1e-4" if r.p_value < 1e-4 else f"{r.p_value:.4g}"
                mark = "*" if r.verdict == "causal" else ""
                flag = " (degenerate)" if r.degenerate else ""
                cells.append(f"p={p}{mark} F={r.f_statistic:.3g}{flag}")
            rows.append(cells)
        widths = [max(len(str(x[i])) for x in [head, *rows]) for i in range(len(head))]
        fmt = " | ".join(f"{{:<{w}}}" for w in widths)
        lines = [fmt.format(*head), "-+-".join("-" * w for w in widths)]
        lines += [fmt.format(*r) for r in rows]
        lines.append("* p < alpha")
        return "\n".join(lines) + "\n"


def causality_table(
    ds: Dataset,
    classes: ClassAssignment,
    pairs=TABLE_PAIRS,
    lag=1,
    alpha: float = DEFAULT_ALPHA,
    mode: str = "representative",
    window: int = DEFAULT_WINDOW,
    groups=CLASSES,
) -> GrangerTable:
    """Granger results for every (class, pair) cell.

    ``mode="representative"`` tests the median-rank player of each class;
    ``mode="pooled"`` stacks all class members with per-player intercepts.
    Failing cells are kept as degenerate results with p = 1.
    """
    if mode not in ("representative", "pooled"):
        raise ValueError(f"unknown mode {mode!r}")
    pairs = tuple(tuple(p) for p in pairs)
    missing = sorted({c for p in pairs for c in p} - set(ds.frame.columns))
    if missing:
        raise KeyError(f"unknown feature(s): {', '.join(missing)}")
    results = []
    present = []
    for g in groups:
        members = classes.members(g)
        if not members:
            continue
        present.append(g)
        players = [representative_player(ds, classes, g)] if mode == "representative" else sorted(members)
        for cause, effect in pairs:
            cols = list(dict.fromkeys([cause, effect]))
            segs = []
            for p in players:
                s = player_series(ds, p, cols, window)
                segs.append((s[cause].to_numpy(), s[effect].to_numpy()))
            try:
                q = lag
                if lag == "bic":
                    longest = max(segs, key=lambda xy: len(xy[1]))
                    q = select_lag_bic(*longest)
                r = granger_segments(segs, q, alpha, cause, effect)
            except (ValueError, ArithmeticError) as exc:
                r = GrangerResult(cause, effect, lag if isinstance(lag, int) else 0, 0.0, 1.0, 0, alpha, True, str(exc))
            results.append(_with_group(r, g))
    return GrangerTable(tuple(results), pairs, tuple(present), mode)


def _with_group(r: GrangerResult, g: str) -> GrangerResult:
    return GrangerResult(r.cause, r.effect, r.lag, r.f_statistic, r.p_value, r.n_effective, r.alpha, r.degenerate, r.note, g)
