"""Ingestion, calendar flags, standardization and synthetic telemetry.

Records live in a long-format :class:`pandas.DataFrame`, one row per
(player, minute), sorted by ``(player_id, timestamp)``. Every numeric column
other than the identifiers is a feature; ``rank`` and ``points`` are features
too, and are dropped only where a stage says so.
"""

from __future__ import annotations

import datetime as dt
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np
import pandas as pd

from ._kv import parse_kv, read_kv

RESOURCES = ("ceiling_light", "desk_light", "ceiling_fan")
WEATHER = ("temperature", "humidity", "solar_radiation", "rain_rate")
DAY_PARTS = ("morning", "afternoon", "evening")
WEEK_PARTS = ("weekday", "weekend")
SCHEDULE_KINDS = ("break", "midterm", "final", "holiday")
FLAG_NAMES = DAY_PARTS + WEEK_PARTS + SCHEDULE_KINDS

ID_COLUMNS = ("timestamp", "player_id")
REQUIRED_COLUMNS = ("timestamp", "player_id", "rank")

STATUS_COLUMNS = tuple(f"{r}_status" for r in RESOURCES)
USAGE_COLUMNS = tuple(f"{r}_usage" for r in RESOURCES)
BASELINE_COLUMNS = tuple(f"{r}_baseline" for r in RESOURCES)

# Validation rule per logical column. Columns not listed are plain reals.
_BINARY = "binary"
_NONNEG = "nonneg"
_POSITIVE = "positive"
_COUNT = "count"
_RULES: dict[str, str] = {
    **{c: _BINARY for c in STATUS_COLUMNS},
    **{c: _BINARY for c in FLAG_NAMES},
    **{c: _NONNEG for c in USAGE_COLUMNS},
    **{c: _POSITIVE for c in BASELINE_COLUMNS},
    "points": _NONNEG,
    "portal_visits": _COUNT,
}
_RULE_TEXT = {
    _BINARY: "resource_status in {0,1}",
    _NONNEG: "value >= 0",
    _POSITIVE: "value > 0",
    _COUNT: "non-negative integer",
}

MAX_BAD_ROW_FRACTION = 0.05
FFILL_LIMIT_MINUTES = 30


class SchemaError(ValueError):
    """A required logical column is unmapped or absent from the file."""


class DataValidationError(ValueError):
    """Too many rows failed validation to continue."""

    def __init__(self, message, errors):
        super().__init__(message)
        self.errors = errors


class CalendarError(ValueError):
    pass


class StandardizationError(ValueError):
    pass


class ConstantColumnWarning(UserWarning):
    pass


@dataclass(frozen=True)
class RowError:
    line: int
    column: str
    value: str
    rule: str

    def __str__(self):
        return f"line {self.line}: column {self.column!r} value {self.value!r} violates {self.rule!r}"


@dataclass(frozen=True)
class RawRecord:
    timestamp: pd.Timestamp
    player_id: str
    resource_status: dict
    accumulated_usage: dict
    baseline: dict
    points: float
    rank: int
    portal_visits: float
    weather: dict


@dataclass(frozen=True)
class Dataset:
    """Validated telemetry sorted by ``(player_id, timestamp)``."""

    frame: pd.DataFrame
    feature_names: tuple[str, ...]
    errors: tuple[RowError, ...] = ()

    def __len__(self):
        return len(self.frame)

    @property
    def players(self) -> list[str]:
        return list(pd.unique(self.frame["player_id"]))

    @property
    def derived_flags(self) -> pd.DataFrame:
        present = [f for f in FLAG_NAMES if f in self.frame.columns]
        return self.frame[present]

    @property
    def records(self) -> Iterator[RawRecord]:
        cols = set(self.frame.columns)

        def pick(row, names, strip=""):
            return {n.removesuffix(strip): row[n] for n in names if n in cols}

        for row in self.frame.to_dict("records"):
            yield RawRecord(
                timestamp=row["timestamp"],
                player_id=row["player_id"],
                resource_status=pick(row, STATUS_COLUMNS, "_status"),
                accumulated_usage=pick(row, USAGE_COLUMNS, "_usage"),
                baseline=pick(row, BASELINE_COLUMNS, "_baseline"),
                points=row.get("points", math.nan),
                rank=int(row["rank"]),
                portal_visits=row.get("portal_visits", math.nan),
                weather=pick(row, WEATHER),
            )

    def subset(self, mask) -> "Dataset":
        return Dataset(self.frame.loc[np.asarray(mask)].reset_index(drop=True), self.feature_names, self.errors)

    def for_players(self, players) -> "Dataset":
        return self.subset(self.frame["player_id"].isin(list(players)).to_numpy())


def read_schema(path) -> dict[str, str]:
    """Read a ``logical_name=csv_header`` schema file."""
    return dict(read_kv(path))


def load_csv(path, schema: Mapping[str, str] | str | Path | None = None) -> Dataset:
    """Load, validate and sort a telemetry CSV export.

    ``schema`` maps logical column names to file headers; it may be a mapping,
    the path of a ``key=value`` schema file, or ``None`` when the headers are
    already logical names. Rows failing coercion or a record invariant are
    listed in ``Dataset.errors`` and dropped. More than 5% bad rows raises
    :class:`DataValidationError`.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    if schema is None:
        schema = {c: c for c in raw.columns}
    elif not isinstance(schema, Mapping):
        schema = read_schema(schema)

    missing = [c for c in REQUIRED_COLUMNS if c not in schema or schema[c] not in raw.columns]
    if missing:
        raise SchemaError(f"required column(s) missing: {', '.join(missing)}")
    absent = [k for k, h in schema.items() if h not in raw.columns]
    if absent:
        raise SchemaError(f"schema header(s) not in file: {', '.join(schema[k] for k in absent)}")

    n = len(raw)
    lines = np.arange(n) + 2  # header is line 1
    bad = np.zeros(n, dtype=bool)
    errors: list[RowError] = []

    def flag(mask, column, rule):
        for i in np.flatnonzero(mask & ~bad):
            errors.append(RowError(int(lines[i]), column, raw[schema[column]].iat[i], rule))
        bad[mask] = True

    out = {}
    ts_text = raw[schema["timestamp"]].str.strip()
    ts = pd.to_datetime(ts_text, format="ISO8601", errors="coerce")
    flag(ts.isna().to_numpy(), "timestamp", "ISO-8601 timestamp")
    out["timestamp"] = ts.dt.floor("min")

    pid = raw[schema["player_id"]].str.strip()
    flag((pid == "").to_numpy(), "player_id", "non-empty identifier")
    out["player_id"] = pid

    rank = pd.to_numeric(raw[schema["rank"]].str.strip(), errors="coerce")
    r = rank.to_numpy(dtype=float)
    flag(~np.isfinite(r) | (r < 1) | (r != np.round(r)), "rank", "rank >= 1 integer")
    out["rank"] = rank

    features = ["rank"]
    for logical in schema:
        if logical in REQUIRED_COLUMNS:
            continue
        text = raw[schema[logical]].str.strip()
        empty = (text == "").to_numpy()
        vals = pd.to_numeric(text.where(~empty), errors="coerce").to_numpy(dtype=float)
        flag(~empty & ~np.isfinite(vals), logical, "real number")
        rule = _RULES.get(logical)
        ok = np.isnan(vals)
        if rule == _BINARY:
            flag(~ok & ~np.isin(vals, (0.0, 1.0)), logical, _RULE_TEXT[rule])
        elif rule == _NONNEG:
            flag(~ok & (vals < 0), logical, _RULE_TEXT[rule])
        elif rule == _POSITIVE:
            flag(~ok & (vals <= 0), logical, _RULE_TEXT[rule])
        elif rule == _COUNT:
            flag(~ok & ((vals < 0) | (vals != np.round(vals))), logical, _RULE_TEXT[rule])
        out[logical] = vals
        features.append(logical)

    frame = pd.DataFrame(out)
    frame["_line"] = lines
    frame = frame.loc[~bad]

    # Ordering invariants are checked on rows that survived coercion.
    frame = frame.sort_values(["player_id", "timestamp", "_line"], kind="mergesort")
    dup = frame.duplicated(["player_id", "timestamp"], keep="first").to_numpy()
    for line in frame["_line"].to_numpy()[dup]:
        errors.append(RowError(int(line), "timestamp", str(ts_text.iat[line - 2]), "strictly increasing timestamps within a player"))
    frame = frame.loc[~dup]
    for col in USAGE_COLUMNS:
        if col not in frame.columns:
            continue
        day = frame["timestamp"].dt.normalize()
        prev = frame.groupby([frame["player_id"], day])[col].transform(lambda s: s.ffill().shift())
        dec = (frame[col] < prev).to_numpy()
        for line in frame["_line"].to_numpy()[dec]:
            errors.append(RowError(int(line), col, raw[schema[col]].iat[line - 2], "accumulated_usage non-decreasing within a day"))
        frame = frame.loc[~dec]

    errors.sort(key=lambda e: e.line)
    n_bad = n - len(frame)
    if n and n_bad / n > MAX_BAD_ROW_FRACTION:
        head = "; ".join(str(e) for e in errors[:5])
        raise DataValidationError(
            f"{n_bad} of {n} rows ({100 * n_bad / n:.1f}%) failed validation, limit is "
            f"{100 * MAX_BAD_ROW_FRACTION:.0f}%: {head}",
            tuple(errors),
        )
    frame = frame.drop(columns="_line").reset_index(drop=True)
    frame["rank"] = frame["rank"].astype(np.int64)
    return Dataset(frame, tuple(features), tuple(errors))


def write_csv(ds: Dataset, path) -> Path:
    """Write ``ds`` with logical headers so that ``load_csv(path)`` restores it."""
    path = Path(path)
    frame = ds.frame.copy()
    frame["timestamp"] = frame["timestamp"].dt.strftime("%Y-%m-%dT%H:%M:%S")
    frame[list(ID_COLUMNS) + list(ds.feature_names)].to_csv(path, index=False, float_format="%.17g")
    return path


@dataclass(frozen=True)
class AcademicCalendar:
    """Inclusive date ranges for schedule flags plus day-part boundaries.

    ``ranges`` maps a kind in ``SCHEDULE_KINDS`` to ``(start, end)`` date
    pairs. Day parts are half-open hour intervals ``[6,12)``, ``[12,18)`` and
    ``[18,24)``; hours before ``morning_start`` are night and set none of them.
    """

    ranges: Mapping[str, tuple[tuple[dt.date, dt.date], ...]] = field(default_factory=dict)
    morning_start: int = 6
    afternoon_start: int = 12
    evening_start: int = 18

    def __post_init__(self):
        if not 0 <= self.morning_start < self.afternoon_start < self.evening_start <= 24:
            raise CalendarError("day-part boundaries must increase within [0, 24]")
        for kind, spans in self.ranges.items():
            if kind not in SCHEDULE_KINDS:
                raise CalendarError(f"unknown calendar kind {kind!r}")
            ordered = sorted(spans)
            for start, end in ordered:
                if end < start:
                    raise CalendarError(f"{kind}: range {start}..{end} ends before it starts")
            for (s0, e0), (s1, e1) in zip(ordered, ordered[1:]):
                if s1 <= e0:
                    raise CalendarError(f"{kind}: ranges {s0}..{e0} and {s1}..{e1} overlap")

    @classmethod
    def from_file(cls, path) -> "AcademicCalendar":
        """Parse lines like ``final=2017-11-20..2017-12-02``.

        Kinds may repeat; ``morning_start``/``afternoon_start``/``evening_start``
        override the hour boundaries.
        """
        ranges: dict[str, list] = {}
        hours = {}
        for key, value in read_kv(path):
            if key in ("morning_start", "afternoon_start", "evening_start"):
                hours[key] = int(value)
                continue
            try:
                a, b = value.split("..")
                span = (dt.date.fromisoformat(a.strip()), dt.date.fromisoformat(b.strip()))
            except ValueError as exc:
                raise CalendarError(f"{key}: bad range {value!r}") from exc
            ranges.setdefault(key, []).append(span)
        return cls({k: tuple(v) for k, v in ranges.items()}, **hours)


def derive_flags(ds: Dataset, calendar: AcademicCalendar | None = None) -> Dataset:
    """Add the nine calendar indicator columns to every record."""
    calendar = calendar or AcademicCalendar()
    ts = ds.frame["timestamp"]
    hour = ts.dt.hour
    frame = ds.frame.copy()
    frame["morning"] = ((hour >= calendar.morning_start) & (hour < calendar.afternoon_start)).astype(np.int64)
    frame["afternoon"] = ((hour >= calendar.afternoon_start) & (hour < calendar.evening_start)).astype(np.int64)
    frame["evening"] = (hour >= calendar.evening_start).astype(np.int64)
    weekend = ts.dt.dayofweek >= 5
    frame["weekday"] = (~weekend).astype(np.int64)
    frame["weekend"] = weekend.astype(np.int64)
    day = ts.dt.normalize()
    for kind in SCHEDULE_KINDS:
        hit = np.zeros(len(frame), dtype=bool)
        for start, end in calendar.ranges.get(kind, ()):
            hit |= ((day >= pd.Timestamp(start)) & (day <= pd.Timestamp(end))).to_numpy()
        frame[kind] = hit.astype(np.int64)
    names = tuple(ds.feature_names) + tuple(f for f in FLAG_NAMES if f not in ds.feature_names)
    return Dataset(frame, names, ds.errors)


@dataclass(frozen=True)
class FeatureMatrix:
    """Z-scored observation matrix whose columns are the graph vertices.

    Standard deviations use the population (1/N) convention, so
    ``values.T @ values / N`` is exactly the Pearson correlation matrix.
    """

    values: np.ndarray
    vertex_labels: tuple[str, ...]
    column_means: np.ndarray
    column_stds: np.ndarray
    excluded: tuple[str, ...] = ()
    row_ids: np.ndarray | None = None

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def index(self, label: str) -> int:
        return self.vertex_labels.index(label)

    def drop(self, labels) -> "FeatureMatrix":
        keep = [i for i, v in enumerate(self.vertex_labels) if v not in set(labels)]
        return FeatureMatrix(
            _frozen(self.values[:, keep]),
            tuple(self.vertex_labels[i] for i in keep),
            self.column_means[keep],
            self.column_stds[keep],
            self.excluded,
            self.row_ids,
        )

    @classmethod
    def from_array(cls, values, labels=None, row_ids=None, warn=True) -> "FeatureMatrix":
        values = np.asarray(values, dtype=float)
        if values.ndim != 2:
            raise StandardizationError("expected a 2-D array")
        n, s = values.shape
        labels = tuple(labels) if labels is not None else tuple(f"x{j}" for j in range(s))
        if n < 2:
            raise StandardizationError(f"need at least 2 rows, got {n}")
        if not np.all(np.isfinite(values)):
            raise StandardizationError("non-finite entries")
        mean = values.mean(axis=0)
        centered = values - mean
        std = np.sqrt((centered**2).mean(axis=0))
        constant = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
        excluded = tuple(l for l, c in zip(labels, constant) if c)
        if constant.all():
            raise StandardizationError("all columns are constant")
        if excluded and warn:
            warnings.warn(f"constant column(s) excluded: {', '.join(excluded)}", ConstantColumnWarning, stacklevel=2)
        keep = ~constant
        z = centered[:, keep] / std[keep]
        # A second centring pass removes the O(eps) mean left by the first.
        z -= z.mean(axis=0)
        return cls(
            _frozen(np.asfortranarray(z)),
            tuple(l for l, k in zip(labels, keep) if k),
            mean[keep],
            std[keep],
            excluded,
            None if row_ids is None else np.asarray(row_ids),
        )


def _frozen(a):
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


def fill_missing(frame: pd.DataFrame, columns, limit_minutes: int = FFILL_LIMIT_MINUTES) -> pd.DataFrame:
    """Forward-fill NaNs within each player when the last value is at most ``limit_minutes`` old."""
    frame = frame.copy()
    limit = pd.Timedelta(minutes=limit_minutes)
    groups = frame["player_id"]
    for col in columns:
        if not frame[col].isna().any():
            continue
        seen = frame["timestamp"].where(frame[col].notna())
        last_seen = seen.groupby(groups).ffill()
        filled = frame[col].groupby(groups).ffill()
        fresh = (frame["timestamp"] - last_seen) <= limit
        frame[col] = filled.where(fresh)
    return frame


def standardize(ds: Dataset, columns=None, limit_minutes: int = FFILL_LIMIT_MINUTES, warn=True) -> FeatureMatrix:
    """Z-score ``columns`` of ``ds`` into a :class:`FeatureMatrix`.

    Missing values are forward-filled per player for up to ``limit_minutes``;
    rows still missing are left out, and the surviving row positions are kept
    in ``row_ids``. Constant columns are excluded with a warning.
    """
    columns = list(ds.feature_names if columns is None else columns)
    unknown = [c for c in columns if c not in ds.frame.columns]
    if unknown:
        raise StandardizationError(f"unknown column(s): {', '.join(unknown)}")
    frame = fill_missing(ds.frame[["timestamp", "player_id", *columns]], columns, limit_minutes)
    values = frame[columns].to_numpy(dtype=float)
    ok = np.isfinite(values).all(axis=1)
    return FeatureMatrix.from_array(values[ok], columns, row_ids=np.flatnonzero(ok), warn=warn)


# -- synthetic data ---------------------------------------------------------


@dataclass(frozen=True)
class Channel:
    cause: str
    effect: str
    coef: float


@dataclass(frozen=True)
class SynthConfig:
    """Planted-structure generator settings.

    ``support`` is ``chain``, ``grid`` or ``random(p)``. Group ``g`` draws its
    features from the support pattern with vertices relabelled by a seeded
    permutation (identity for group 0) and a mean offset of ``separation``
    marginal standard deviations from the other groups. Channels are
    ``(cause, effect, coef)`` triples generating
    ``effect_t = ar * effect_{t-1} + coef * cause_{t-1} + noise`` per player.
    """

    S: int = 10
    N: int = 2000
    k: int = 1
    support: str = "chain"
    partial_corr: float = 0.4
    players: int | None = None
    channels: tuple[Channel, ...] = ()
    ar: float = 0.5
    separation: float = 6.0
    rank_jitter: float = 0.1
    start: str = "2018-02-19T00:00"
    seed: int = 0

    @property
    def n_players(self) -> int:
        return self.players if self.players is not None else 3 * self.k

    @classmethod
    def from_pairs(cls, pairs) -> "SynthConfig":
        kw = {}
        for key, value in pairs:
            if key in ("S", "N", "k", "players", "seed"):
                kw[key] = int(value)
            elif key in ("partial_corr", "ar", "separation", "rank_jitter"):
                kw[key] = float(value)
            elif key in ("support", "start"):
                kw[key] = value
            elif key == "channels":
                kw[key] = parse_channels(value)
            else:
                raise ValueError(f"unknown synthetic config key {key!r}")
        return cls(**kw)

    @classmethod
    def from_file(cls, path) -> "SynthConfig":
        return cls.from_pairs(read_kv(path))

    @classmethod
    def from_text(cls, text) -> "SynthConfig":
        return cls.from_pairs(parse_kv(text))


def parse_channels(text: str) -> tuple[Channel, ...]:
    """Parse ``"f1>f5:0.8, f2>f6:0"`` into channels."""
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            pair, coef = item.split(":")
            cause, effect = pair.split(">")
            out.append(Channel(cause.strip(), effect.strip(), float(coef)))
        except ValueError as exc:
            raise ValueError(f"bad channel {item!r}, expected 'x>y:b'") from exc
    return tuple(out)


@dataclass(frozen=True)
class GroundTruth:
    support: frozenset
    group_supports: tuple[frozenset, ...]
    precisions: tuple[np.ndarray, ...]
    labels: np.ndarray
    player_groups: dict
    channels: tuple[Channel, ...]
    feature_names: tuple[str, ...]


def support_edges(S: int, pattern: str, rng: np.random.Generator) -> frozenset:
    """Undirected edge set ``{(i, j): i < j}`` for a named support pattern."""
    pattern = pattern.strip()
    edges = set()
    if pattern == "chain":
        edges = {(i, i + 1) for i in range(S - 1)}
    elif pattern == "grid":
        width = math.ceil(math.sqrt(S))
        for i in range(S):
            if (i + 1) % width and i + 1 < S:
                edges.add((i, i + 1))
            if i + width < S:
                edges.add((i, i + width))
    elif pattern.startswith("random(") and pattern.endswith(")"):
        p = float(pattern[7:-1])
        draws = rng.random((S, S))
        edges = {(i, j) for i in range(S) for j in range(i + 1, S) if draws[i, j] < p}
    else:
        raise ValueError(f"unknown support pattern {pattern!r}")
    return frozenset(edges)


def precision_from_support(S: int, edges, partial_corr: float) -> np.ndarray:
    """Unit-diagonal precision matrix whose edges carry ``partial_corr``."""
    theta = np.eye(S)
    for i, j in edges:
        theta[i, j] = theta[j, i] = -partial_corr
    if np.linalg.eigvalsh(theta)[0] <= 1e-10:
        raise ValueError("requested precision matrix is not positive definite")
    return theta


def generate_synthetic(cfg: SynthConfig, seed: int | None = None) -> tuple[Dataset, GroundTruth]:
    """Draw a deterministic planted dataset.

    The bit stream comes from numpy's PCG64 generator seeded with ``seed``
    (``cfg.seed`` when omitted). Players are assigned round-robin to the ``k``
    groups; group 0 receives the lowest (most efficient) ranks.
    """
    seed = cfg.seed if seed is None else seed
    rng = np.random.Generator(np.random.PCG64(seed))
    S, k, m = cfg.S, cfg.k, cfg.n_players
    if S < 2 or k < 1 or m < 1 or cfg.N < m:
        raise ValueError("need S >= 2, k >= 1, players >= 1 and N >= players")

    base = support_edges(S, cfg.support, rng)
    perms = [np.arange(S)] + [rng.permutation(S) for _ in range(1, k)]
    supports = [frozenset(tuple(sorted((int(p[i]), int(p[j])))) for i, j in base) for p in perms]
    precisions = [precision_from_support(S, e, cfg.partial_corr) for e in supports]
    covs = [np.linalg.inv(t) for t in precisions]
    chols = [np.linalg.cholesky(c) for c in covs]
    scale = max(math.sqrt(float(np.max(np.diag(c)))) for c in covs)
    # Orthonormal offsets spread over all columns keep the separation intact
    # after per-column standardization of the pooled data.
    means = np.zeros((k, S))
    if k > 1:
        basis, _ = np.linalg.qr(rng.standard_normal((S, max(k, S))))
        means = cfg.separation * scale / math.sqrt(2.0) * basis[:, :k].T

    names = [f"f{j}" for j in range(S)]
    for ch in cfg.channels:
        if ch.cause not in names:
            raise ValueError(f"channel cause {ch.cause!r} is not a generated feature")
        if ch.effect not in names:
            names.append(ch.effect)

    groups = np.arange(m) % k
    order = sorted(range(m), key=lambda p: (groups[p], p))
    base_rank = np.empty(m, dtype=np.int64)
    base_rank[order] = np.arange(1, m + 1)
    sizes = np.full(m, cfg.N // m)
    sizes[: cfg.N % m] += 1
    start = pd.Timestamp(cfg.start)
    width = max(2, len(str(m - 1)))

    blocks, labels = [], []
    for p in range(m):
        n, g = int(sizes[p]), int(groups[p])
        x = rng.standard_normal((n, S)) @ chols[g].T + means[g]
        cols = {names[j]: x[:, j] for j in range(S)}
        for ch in cfg.channels:
            cause = cols[ch.cause]
            eps = rng.standard_normal(n)
            y = np.empty(n)
            y[0] = eps[0]
            for t in range(1, n):
                y[t] = cfg.ar * y[t - 1] + ch.coef * cause[t - 1] + eps[t]
            cols[ch.effect] = y
        u = rng.random(n)
        jitter = np.where(u < cfg.rank_jitter / 2, -1, np.where(u > 1 - cfg.rank_jitter / 2, 1, 0))
        rank = np.clip(base_rank[p] + jitter, 1, m)
        points = np.maximum(0.0, 100.0 * (m + 1 - rank) + 5.0 * rng.standard_normal(n))
        block = pd.DataFrame(
            {
                "timestamp": start + pd.to_timedelta(np.arange(n), unit="min"),
                "player_id": f"p{p:0{width}d}",
                "rank": rank.astype(np.int64),
                "points": points,
                **{name: cols[name] for name in names},
            }
        )
        blocks.append(block)
        labels.append(np.full(n, g))

    frame = pd.concat(blocks, ignore_index=True)
    overwritten = {names.index(ch.effect) for ch in cfg.channels if ch.effect in names[:S]}
    supports = [frozenset(e for e in sup if not overwritten & set(e)) for sup in supports]
    truth = GroundTruth(
        support=supports[0],
        group_supports=tuple(supports),
        precisions=tuple(precisions),
        labels=np.concatenate(labels),
        player_groups={f"p{p:0{width}d}": int(groups[p]) for p in range(m)},
        channels=tuple(ch for ch in cfg.channels if ch.coef != 0),
        feature_names=tuple(names),
    )
    return Dataset(frame, ("rank", "points", *names)), truth
