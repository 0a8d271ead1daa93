"""End-to-end segmentation run with per-stage caching.

Stages run in a fixed order and each one persists its outputs (CSV and JSON
only) under ``<out>/stages/<name>/`` together with a manifest holding the
stage key: a hash of the settings it depends on, its upstream keys, the input
file digests and the package version. Downstream stages always read their
inputs back from those files, so a resumed run consumes exactly what a fresh
run would.
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import json
import math
import shutil
import warnings
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from ._kv import format_kv, read_kv
from .causality import TABLE_PAIRS, causality_table
from .clustering import select_k
from .dataset import (
    AcademicCalendar,
    ConstantColumnWarning,
    Dataset,
    RowError,
    derive_flags,
    load_csv,
    read_schema,
    standardize,
    write_csv,
)
from .glasso import CorrelationMatrix, fit_graph, pearson_matrix
from .similarity import SUPERVISED_ONLY, align, similarity_matrix, transfer_labels
from .supervised import CLASSES, ClassAssignment, assign_players, build_segments, representative_player

STAGES = ("ingest", "cluster", "classify", "glasso", "granger", "similarity", "report")
UPSTREAM = {
    "ingest": (),
    "cluster": ("ingest",),
    "classify": ("ingest",),
    "glasso": ("ingest", "cluster", "classify"),
    "granger": ("ingest", "classify"),
    "similarity": ("glasso",),
    "report": ("ingest", "cluster", "classify", "glasso", "granger", "similarity"),
}
STAGE_FIELDS = {
    "ingest": ("input", "schema", "calendar"),
    "cluster": ("features", "k_range", "seed", "batch", "max_iter", "silhouette_sample"),
    "classify": ("segment_mode",),
    "glasso": ("features", "folds", "lambda_selection", "edge_rule", "seed", "class_rows"),
    "granger": ("granger_lag", "granger_mode", "granger_window", "granger_pairs", "alpha"),
    "similarity": ("similarity_metric", "similarity_source"),
    "report": (),
}
PLOT_KINDS = ("elbow", "silhouette", "corr_heatmap", "similarity_heatmap")


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage, cause, completed):
        self.stage = stage
        self.cause = cause
        self.completed = list(completed)
        super().__init__(f"stage {stage!r} failed: {cause}")


# -- configuration ----------------------------------------------------------


def _parse_k_range(text) -> tuple[int, ...]:
    text = str(text).strip()
    if ".." in text:
        a, b = text.split("..")
        ks = tuple(range(int(a), int(b) + 1))
    else:
        ks = tuple(int(t) for t in text.split(",") if t.strip())
    if not ks or list(ks) != sorted(set(ks)) or ks[0] < 1:
        raise ConfigError(f"bad k_range {text!r}")
    return ks


def _parse_pairs(text) -> tuple[tuple[str, str], ...]:
    out = []
    for item in str(text).split(","):
        item = item.strip()
        if not item:
            continue
        if ">" not in item:
            raise ConfigError(f"bad Granger pair {item!r}, expected cause>effect")
        a, b = item.split(">", 1)
        out.append((a.strip(), b.strip()))
    return tuple(out)


@dataclass(frozen=True)
class PipelineConfig:
    input: Path | None = None
    schema: Path | None = None
    calendar: Path | None = None
    k_range: tuple[int, ...] = (2, 3, 4, 5)
    seed: int = 0
    folds: int = 5
    lambda_selection: str = "1se"
    edge_rule: str = "OR"
    granger_lag: int | str = 1
    granger_mode: str = "representative"
    granger_window: int = 15
    granger_pairs: tuple | None = None
    alpha: float = 0.05
    similarity_metric: str = "rv"
    similarity_source: str = "pearson"
    features: tuple | None = None
    segment_mode: str = "width"
    class_rows: str = "representative"
    batch: int | None = None
    max_iter: int = 100
    silhouette_sample: int = 20000
    out: Path = Path("out")

    @classmethod
    def from_pairs(cls, pairs, base_dir=None) -> "PipelineConfig":
        base = Path(base_dir) if base_dir is not None else Path(".")
        names = {f.name for f in fields(cls)}
        kw = {}
        for key, value in pairs:
            if key not in names:
                raise ConfigError(f"unknown config key {key!r}")
            if value == "":
                continue
            try:
                kw[key] = cls._coerce(key, value, base)
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from exc
        return cls(**kw)

    @staticmethod
    def _coerce(key, value, base):
        if key in ("input", "schema", "calendar", "out"):
            p = Path(value)
            return p if p.is_absolute() else base / p
        if key == "k_range":
            return _parse_k_range(value)
        if key in ("seed", "folds", "granger_window", "batch", "max_iter", "silhouette_sample"):
            return int(value)
        if key == "alpha":
            return float(value)
        if key == "granger_lag":
            return "bic" if value.strip().lower() == "bic" else int(value)
        if key == "granger_pairs":
            return _parse_pairs(value)
        if key == "features":
            return tuple(v.strip() for v in value.split(",") if v.strip())
        return value.strip()

    @classmethod
    def from_file(cls, path, **overrides) -> "PipelineConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        cfg = cls.from_pairs(read_kv(path), base_dir=path.parent)
        return replace(cfg, **{k: v for k, v in overrides.items() if v is not None})

    def validate(self) -> "PipelineConfig":
        if self.input is None:
            raise ConfigError("config has no input path")
        for name in ("input", "schema", "calendar"):
            p = getattr(self, name)
            if p is not None and not Path(p).is_file():
                raise ConfigError(f"{name} path does not exist: {p}")
        checks = {
            "lambda_selection": ("min", "1se"),
            "edge_rule": ("AND", "OR"),
            "granger_mode": ("representative", "pooled"),
            "similarity_metric": ("pearson", "rv"),
            "similarity_source": ("pearson", "partial"),
            "segment_mode": ("width", "tertile"),
            "class_rows": ("representative", "all"),
        }
        for name, allowed in checks.items():
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        return self

    def as_pairs(self) -> list[tuple[str, str]]:
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                text = ""
            elif f.name == "k_range":
                text = ",".join(map(str, v))
            elif f.name == "granger_pairs":
                text = ",".join(f"{a}>{b}" for a, b in v)
            elif f.name == "features":
                text = ",".join(v)
            else:
                text = str(v)
            out.append((f.name, text))
        return out

    def to_text(self) -> str:
        return format_kv(self.as_pairs())

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()


# -- helpers ----------------------------------------------------------------


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _clean(obj):
    """Make ``obj`` JSON-safe: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _dump_json(path, obj):
    Path(path).write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def _load_json(path):
    return json.loads(Path(path).read_text())


def _write_rows(path, header, rows):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for v in r])


def cluster_features(cfg: PipelineConfig, ds: Dataset) -> list[str]:
    """Clustering features: configured list, or every feature except points and rank."""
    feats = list(cfg.features) if cfg.features else [f for f in ds.feature_names if f not in SUPERVISED_ONLY]
    feats = [f for f in feats if f not in SUPERVISED_ONLY]
    missing = [f for f in feats if f not in ds.frame.columns]
    if missing:
        raise ConfigError(f"unknown feature(s): {', '.join(missing)}")
    return feats


def _standardize_quiet(ds, cols):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConstantColumnWarning)
        return standardize(ds, cols)


def _group_file(group: str) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in group)


# -- pipeline ---------------------------------------------------------------


@dataclass(frozen=True)
class SegmentReport:
    data: dict
    path: Path | None = None

    def __getitem__(self, key):
        return self.data[key]

    def to_json(self) -> str:
        return json.dumps(_clean(self.data), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_file(cls, path) -> "SegmentReport":
        return cls(_load_json(path), Path(path))


class Pipeline:
    """Runs the stages for one config; see :func:`run_pipeline`."""

    def __init__(self, cfg: PipelineConfig, resume: bool = True):
        self.cfg = cfg.validate()
        self.out = Path(cfg.out)
        self.resume = resume
        self.keys: dict[str, str] = {}
        self.results: dict = {}
        self.completed: list[str] = []
        self.cached: list[str] = []

    def stage_dir(self, name) -> Path:
        return self.out / "stages" / name

    def stage_key(self, name) -> str:
        if name in self.keys:
            return self.keys[name]
        parts = {"stage": name, "version": __version__, "upstream": [self.stage_key(u) for u in UPSTREAM[name]]}
        for f in STAGE_FIELDS[name]:
            v = getattr(self.cfg, f)
            if f in ("input", "schema", "calendar"):
                v = None if v is None else _sha256_file(v)
            parts[f] = _clean(v)
        key = hashlib.sha256(json.dumps(parts, sort_keys=True).encode()).hexdigest()
        self.keys[name] = key
        return key

    def run(self, until: str = "report"):
        if until not in STAGES:
            raise ValueError(f"unknown stage {until!r}")
        wanted = self._closure(until)
        for name in STAGES:
            if name not in wanted:
                continue
            try:
                self.results[name] = self._stage(name)
            except Exception as exc:
                self._write_partial(name, exc)
                raise StageError(name, exc, self.completed) from exc
            self.completed.append(name)
        return self.results[until]

    def _closure(self, name) -> set:
        need = {name}
        for u in UPSTREAM[name]:
            need |= self._closure(u)
        return need

    def _write_partial(self, failed, exc):
        self.out.mkdir(parents=True, exist_ok=True)
        _dump_json(
            self.out / "partial_manifest.json",
            {"failed_stage": failed, "error": f"{type(exc).__name__}: {exc}", "completed": self.completed, "stage_keys": {s: self.keys.get(s) for s in self.completed}},
        )

    def _stage(self, name):
        d = self.stage_dir(name)
        key = self.stage_key(name)
        manifest = d / "manifest.json"
        if self.resume and manifest.is_file():
            try:
                if _load_json(manifest).get("key") == key:
                    self.cached.append(name)
                    return getattr(self, f"_load_{name}")(d)
            except (ValueError, OSError):
                pass
        if d.exists():
            shutil.rmtree(d)
        d.mkdir(parents=True)
        getattr(self, f"_run_{name}")(d)
        _dump_json(manifest, {"stage": name, "key": key, "seed": self.cfg.seed, "version": __version__, "upstream": {u: self.stage_key(u) for u in UPSTREAM[name]}})
        return getattr(self, f"_load_{name}")(d)

    # ingest

    def _run_ingest(self, d):
        cfg = self.cfg
        schema = read_schema(cfg.schema) if cfg.schema is not None else None
        ds = load_csv(cfg.input, schema)
        calendar = AcademicCalendar.from_file(cfg.calendar) if cfg.calendar is not None else AcademicCalendar()
        ds = derive_flags(ds, calendar)
        write_csv(ds, d / "dataset.csv")
        _write_rows(d / "errors.csv", ["line", "column", "value", "rule"], [(e.line, e.column, e.value, e.rule) for e in ds.errors])

    def _load_ingest(self, d) -> Dataset:
        ds = load_csv(d / "dataset.csv")
        errs = pd.read_csv(d / "errors.csv", dtype=str, keep_default_na=False)
        errors = tuple(RowError(int(r.line), r.column, r.value, r.rule) for r in errs.itertuples(index=False))
        return Dataset(ds.frame, ds.feature_names, errors)

    # cluster

    def _run_cluster(self, d):
        cfg, ds = self.cfg, self.results["ingest"]
        fm = _standardize_quiet(ds, cluster_features(cfg, ds))
        sel = select_k(fm, cfg.k_range, seed=cfg.seed, batch=cfg.batch, max_iter=cfg.max_iter, silhouette_sample=cfg.silhouette_sample)
        fit = sel.fits[sel.k]
        _write_rows(d / "labels.csv", ["row_id", "cluster"], zip(fm.row_ids.tolist(), fit.labels.tolist()))
        _write_rows(d / "scan.csv", ["k", "distortion", "silhouette"], [(k, f.distortion, f.silhouette) for k, f in sel.fits.items()])
        elbow = sel.elbow
        _dump_json(
            d / "cluster.json",
            {
                "k": sel.k,
                "forced": sel.forced,
                "elbow_suggested_k": None if elbow is None else elbow.suggested_k,
                "elbow_curvature_ratio": None if elbow is None else elbow.curvature_ratio,
                "elbow_low_confidence": None if elbow is None else elbow.low_confidence,
                "disagreement": sel.disagreement,
                "features": list(fm.vertex_labels),
                "excluded_constant": list(fm.excluded),
                "centers": fit.centers,
                "distortion": fit.distortion,
                "silhouette": fit.silhouette,
                "empty_clusters": list(fit.empty),
                "cluster_sizes": np.bincount(fit.labels, minlength=sel.k),
                "n_rows": fm.n_samples,
                "seed": cfg.seed,
                "silhouette_sample": min(cfg.silhouette_sample, fm.n_samples),
            },
        )

    def _load_cluster(self, d) -> dict:
        info = _load_json(d / "cluster.json")
        labels = pd.read_csv(d / "labels.csv")
        scan = pd.read_csv(d / "scan.csv")
        info["row_ids"] = labels["row_id"].to_numpy()
        info["labels"] = labels["cluster"].to_numpy()
        info["scan"] = [
            {"k": int(r.k), "distortion": float(r.distortion), "silhouette": None if pd.isna(r.silhouette) else float(r.silhouette)}
            for r in scan.itertuples(index=False)
        ]
        return info

    # classify

    def _run_classify(self, d):
        ds = self.results["ingest"]
        segs = build_segments(ds.frame["rank"].to_numpy(), mode=self.cfg.segment_mode)
        ca = assign_players(ds, segs)
        ca.to_csv(d / "classes.csv")
        reps = {c: representative_player(ds, ca, c) for c in CLASSES if ca.members(c)}
        _dump_json(
            d / "classify.json",
            {
                "segments": {k: list(v) for k, v in segs.as_dict().items()},
                "segment_mode": self.cfg.segment_mode,
                "representatives": reps,
                "class_sizes": {c: len(ca.members(c)) for c in CLASSES},
            },
        )

    def _load_classify(self, d) -> dict:
        info = _load_json(d / "classify.json")
        info["assignment"] = ClassAssignment.from_csv(d / "classes.csv")
        return info

    # glasso

    def _groups(self):
        """Row subsets for the supervised classes and unsupervised clusters."""
        cfg, ds = self.cfg, self.results["ingest"]
        cl, cls = self.results["cluster"], self.results["classify"]
        ca = cls["assignment"]
        feats = cluster_features(cfg, ds)
        sup_feats = feats + [c for c in SUPERVISED_ONLY if c in ds.frame.columns]
        groups = []
        for c in CLASSES:
            if not ca.members(c):
                continue
            players = [cls["representatives"][c]] if cfg.class_rows == "representative" else ca.members(c)
            groups.append((c, ds.for_players(players), sup_feats))
        for c in range(int(cl["k"])):
            rows = cl["row_ids"][cl["labels"] == c]
            groups.append((f"cluster{c + 1}", ds.subset(np.isin(np.arange(len(ds)), rows)), feats))
        return groups

    def _run_glasso(self, d):
        cfg = self.cfg
        index = {"groups": [], "defects": {}}
        for name, sub, feats in self._groups():
            try:
                fm = _standardize_quiet(sub, feats)
                pearson = pearson_matrix(fm)
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    graph = fit_graph(fm, cfg.edge_rule, folds=cfg.folds, seed=cfg.seed, selection=cfg.lambda_selection)
            except ValueError as exc:
                index["defects"][name] = str(exc)
                continue
            f = _group_file(name)
            pearson.to_csv(d / f"corr_{f}.csv")
            graph.partial_matrix().to_csv(d / f"partial_{f}.csv")
            graph.write(d / f"edges_{f}.csv")
            _dump_json(d / f"graph_{f}.json", {**graph.summary(), "seed": cfg.seed, "n_rows": fm.n_samples, "excluded_constant": list(fm.excluded)})
            index["groups"].append(name)
        _dump_json(d / "glasso.json", index)

    def _load_glasso(self, d) -> dict:
        index = _load_json(d / "glasso.json")
        groups = {}
        for name in index["groups"]:
            f = _group_file(name)
            edges = pd.read_csv(d / f"edges_{f}.csv", dtype={"vertex_a": str, "vertex_b": str})
            groups[name] = {
                "pearson": CorrelationMatrix.from_csv(d / f"corr_{f}.csv", "pearson"),
                "partial": CorrelationMatrix.from_csv(d / f"partial_{f}.csv", "partial"),
                "summary": _load_json(d / f"graph_{f}.json"),
                "edges": [[r.vertex_a, r.vertex_b, float(r.partial_correlation)] for r in edges.itertuples(index=False)],
            }
        return {"groups": groups, "defects": index["defects"]}

    # granger

    def _run_granger(self, d):
        cfg, ds = self.cfg, self.results["ingest"]
        cols = set(ds.frame.columns)
        if cfg.granger_pairs:
            pairs = list(cfg.granger_pairs)
        else:
            pairs = [p for p in TABLE_PAIRS if set(p) <= cols]
        note = ""
        if pairs:
            table = causality_table(ds, self.results["classify"]["assignment"], pairs, cfg.granger_lag, cfg.alpha, cfg.granger_mode, cfg.granger_window)
            table.to_csv(d / "granger.csv")
            (d / "granger.txt").write_text(table.format_text())
        else:
            note = "no Granger pairs available in this dataset"
            _write_rows(d / "granger.csv", ["class", "cause", "effect", "lag", "f_statistic", "p_value", "verdict", "n_effective", "degenerate"], [])
            (d / "granger.txt").write_text(note + "\n")
        _dump_json(d / "granger.json", {"mode": cfg.granger_mode, "lag": cfg.granger_lag, "window": cfg.granger_window, "alpha": cfg.alpha, "note": note})

    def _load_granger(self, d) -> dict:
        info = _load_json(d / "granger.json")
        rows = pd.read_csv(d / "granger.csv", dtype={"class": str, "cause": str, "effect": str, "verdict": str})
        info["rows"] = [
            {
                "class": r[0],
                "cause": r.cause,
                "effect": r.effect,
                "lag": int(r.lag),
                "f_statistic": float(r.f_statistic),
                "p_value": float(r.p_value),
                "verdict": r.verdict,
                "n_effective": int(r.n_effective),
                "degenerate": bool(r.degenerate),
            }
            for r in rows.itertuples(index=False)
        ]
        info["text"] = (d / "granger.txt").read_text()
        return info

    # similarity

    def _run_similarity(self, d):
        cfg = self.cfg
        groups = self.results["glasso"]["groups"]
        src = cfg.similarity_source
        sup = {g: groups[g][src] for g in CLASSES if g in groups}
        unsup = {g: m[src] for g, m in groups.items() if g.startswith("cluster")}
        out = {"binding_metric": cfg.similarity_metric, "source": src, "mappings": {}, "note": ""}
        if len(sup) < 2 or not unsup:
            out["note"] = "not enough groups for similarity"
            _dump_json(d / "similarity.json", out)
            return
        sup, unsup = align(sup, unsup)
        out["features"] = list(next(iter(sup.values())).labels)
        for metric in ("pearson", "rv"):
            sim = similarity_matrix(sup, unsup, metric)
            sim.to_csv(d / f"similarity_{metric}.csv")
            if len(sup) == len(unsup):
                lm = transfer_labels(sup, unsup, metric)
                out["mappings"][metric] = {"mapping": lm.as_json(), "conflict": lm.conflict}
        if len(sup) != len(unsup):
            out["note"] = f"{len(unsup)} clusters vs {len(sup)} classes; no bijective mapping"
        m = out["mappings"]
        if "pearson" in m and "rv" in m:
            agree = all(m["pearson"]["mapping"][c]["class"] == m["rv"]["mapping"][c]["class"] for c in m["rv"]["mapping"])
            out["metrics_agree"] = agree
        _dump_json(d / "similarity.json", out)

    def _load_similarity(self, d) -> dict:
        info = _load_json(d / "similarity.json")
        info["matrices"] = {}
        for metric in ("pearson", "rv"):
            p = d / f"similarity_{metric}.csv"
            if p.is_file():
                with p.open(newline="") as fh:
                    rows = list(csv.reader(fh))
                info["matrices"][metric] = {
                    "rows": [r[0] for r in rows[1:]],
                    "cols": rows[0][1:],
                    "values": [[float(v) for v in r[1:]] for r in rows[1:]],
                }
        binding = info["mappings"].get(info["binding_metric"])
        info["mapping"] = None if binding is None else {c: v["class"] for c, v in binding["mapping"].items()}
        return info

    # report

    def _run_report(self, d):
        _dump_json(d / "report_body.json", self._report_body())

    def _load_report(self, d) -> SegmentReport:
        body = _load_json(d / "report_body.json")
        body["provenance"]["timestamp"] = dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")
        self._publish(body)
        _dump_json(self.out / "run_log.json", {"cached_stages": self.cached, "completed": self.completed + ["report"]})
        return SegmentReport(body, self.out / "report.json")

    def _report_body(self) -> dict:
        cfg, r = self.cfg, self.results
        ds, cl, cls = r["ingest"], r["cluster"], r["classify"]
        ca = cls["assignment"]
        return {
            "provenance": {
                "config_hash": cfg.config_hash(),
                "seed": cfg.seed,
                "version": __version__,
                "input_sha256": _sha256_file(cfg.input),
                "stage_keys": {s: self.stage_key(s) for s in STAGES},
            },
            "config": dict(cfg.as_pairs()),
            "ingest": {
                "n_records": len(ds),
                "n_players": len(ds.players),
                "n_row_errors": len(ds.errors),
                "features": list(ds.feature_names),
            },
            "clustering": {k: v for k, v in cl.items() if k not in ("row_ids", "labels")},
            "classes": {
                "segments": cls["segments"],
                "segment_mode": cls["segment_mode"],
                "representatives": cls["representatives"],
                "class_sizes": cls["class_sizes"],
                "players": {
                    p: {"class": ca.classes[p], "counts": list(ca.counts[p]), "n_i": ca.n_i[p], "median_rank": ca.median_rank[p]}
                    for p in sorted(ca.classes)
                },
            },
            "correlations": {
                g: {"labels": list(m["pearson"].labels), "pearson": m["pearson"].values, "partial": m["partial"].values}
                for g, m in r["glasso"]["groups"].items()
            },
            "graphs": {g: {"summary": m["summary"], "edges": m["edges"]} for g, m in r["glasso"]["groups"].items()},
            "glasso_defects": r["glasso"]["defects"],
            "granger": {k: v for k, v in r["granger"].items() if k != "text"},
            "similarity": {k: v for k, v in r["similarity"].items()},
        }

    def _publish(self, body):
        """Write report.json and the fixed-name artifacts at the top of ``out``."""
        out = self.out
        (out / "report.json").write_text(SegmentReport(body).to_json())
        st = out / "stages"
        shutil.copyfile(st / "cluster" / "labels.csv", out / "labels.csv")
        shutil.copyfile(st / "classify" / "classes.csv", out / "classes.csv")
        shutil.copyfile(st / "granger" / "granger.csv", out / "granger.csv")
        shutil.copyfile(st / "granger" / "granger.txt", out / "granger.txt")
        for metric in ("pearson", "rv"):
            p = st / "similarity" / f"similarity_{metric}.csv"
            if p.is_file():
                shutil.copyfile(p, out / f"similarity_{metric}.csv")
        for g in body["correlations"]:
            f = _group_file(g)
            shutil.copyfile(st / "glasso" / f"corr_{f}.csv", out / f"corr_{f}.csv")
            shutil.copyfile(st / "glasso" / f"edges_{f}.csv", out / f"edges_{f}.csv")
            shutil.copyfile(st / "glasso" / f"graph_{f}.json", out / f"graph_{f}.json")
        _dump_json(out / "mapping.json", {"seed": self.cfg.seed, **{k: body["similarity"].get(k) for k in ("binding_metric", "mapping", "mappings", "metrics_agree", "note")}})
        emit_plot_data(body, "elbow", out / "elbow.csv")
        emit_plot_data(body, "silhouette", out / "silhouette.csv")


def run_pipeline(cfg: PipelineConfig, until: str = "report", resume: bool = True):
    """Run every stage up to ``until`` and return that stage's result.

    With the default ``until="report"`` this returns the :class:`SegmentReport`
    and writes ``report.json`` plus the CSV artifacts under ``cfg.out``.
    Cached stages whose key still matches are loaded instead of recomputed.
    """
    return Pipeline(cfg, resume=resume).run(until)


def emit_plot_data(report, kind: str, path, group: str | None = None, metric: str | None = None, matrix: str = "pearson") -> Path:
    """Write the CSV behind one figure.

    ``elbow``: columns ``k, distortion``. ``silhouette``: ``k, silhouette``.
    ``corr_heatmap``: square matrix of ``group`` with feature labels.
    ``similarity_heatmap``: class-by-cluster matrix for ``metric``.
    """
    data = report.data if isinstance(report, SegmentReport) else report
    path = Path(path)
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}")
    if kind in ("elbow", "silhouette"):
        scan = data.get("clustering", {}).get("scan")
        if scan is None:
            raise KeyError("report has no clustering stage")
        col = "distortion" if kind == "elbow" else "silhouette"
        rows = [(s["k"], s[col]) for s in scan if s[col] is not None]
        _write_rows(path, ["k", col], rows)
    elif kind == "corr_heatmap":
        corr = data.get("correlations", {})
        if group not in corr:
            raise KeyError(f"report has no correlation matrix for group {group!r}")
        m = corr[group]
        CorrelationMatrix(np.asarray(m[matrix], dtype=float), tuple(m["labels"]), matrix).to_csv(path)
    else:
        sims = data.get("similarity", {}).get("matrices", {})
        metric = metric or data.get("similarity", {}).get("binding_metric", "rv")
        if metric not in sims:
            raise KeyError(f"report has no {metric} similarity matrix")
        s = sims[metric]
        _write_rows(path, [metric, *s["cols"]], [[r, *vals] for r, vals in zip(s["rows"], s["values"])])
    return path
