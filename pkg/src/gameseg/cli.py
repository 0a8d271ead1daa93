"""Command-line entry point (``gameseg``)."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from ._kv import format_kv, parse_kv
from .dataset import CalendarError, DataValidationError, SchemaError, StandardizationError, SynthConfig, generate_synthetic, write_csv
from .pipeline import PLOT_KINDS, ConfigError, PipelineConfig, SegmentReport, StageError, emit_plot_data, run_pipeline


class CLIError(Exception):
    def __init__(self, code, msg):
        self.code = code
        super().__init__(msg)


def _error_code(exc) -> str:
    if isinstance(exc, CLIError):
        return exc.code
    if isinstance(exc, StageError):
        return "E_STAGE"
    for cls, code in (
        (ConfigError, "E_CONFIG"),
        (SchemaError, "E_SCHEMA"),
        (DataValidationError, "E_DATA"),
        (CalendarError, "E_CALENDAR"),
        (StandardizationError, "E_DATA"),
        (FileNotFoundError, "E_IO"),
        (OSError, "E_IO"),
        (KeyError, "E_INPUT"),
        (ValueError, "E_INPUT"),
    ):
        if isinstance(exc, cls):
            return code
    return "E_INTERNAL"


def _message(exc) -> str:
    msg = str(exc.args[0]) if isinstance(exc, KeyError) and exc.args else str(exc)
    if isinstance(exc, StageError):
        msg = f"stage {exc.stage!r} failed ({_error_code(exc.cause)}): {exc.cause}"
    return " ".join(msg.split())


def _load_config(args) -> PipelineConfig:
    if not args.config:
        raise CLIError("E_CONFIG", "this command needs --config FILE")
    try:
        cfg = PipelineConfig.from_file(args.config)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, out=Path(args.out))
    return cfg


def _summary(stage, result, cfg) -> dict:
    if stage == "ingest":
        return {"records": len(result), "players": len(result.players), "row_errors": len(result.errors)}
    if stage == "cluster":
        return {"k": result["k"], "forced": result["forced"], "silhouette": result["silhouette"], "elbow_k": result["elbow_suggested_k"]}
    if stage == "classify":
        return {"class_sizes": result["class_sizes"], "representatives": result["representatives"]}
    if stage == "glasso":
        return {g: m["summary"]["n_edges"] for g, m in result["groups"].items()}
    if stage == "granger":
        return {"cells": len(result["rows"]), "causal": sum(r["verdict"] == "causal" for r in result["rows"])}
    if stage == "similarity":
        return {"binding_metric": result["binding_metric"], "mapping": result["mapping"], "note": result["note"]}
    return {"report": str(Path(cfg.out) / "report.json")}


def cmd_stage(args, stage):
    cfg = _load_config(args)
    result = run_pipeline(cfg, until=stage, resume=not args.no_cache)
    print(json.dumps({"stage": stage, **_summary(stage, result, cfg)}, sort_keys=True, default=str))


def cmd_synth(args):
    pairs = []
    if args.synth_config:
        pairs += parse_kv(Path(args.synth_config).read_text())
    for item in args.set or []:
        pairs += parse_kv(item)
    try:
        cfg = SynthConfig.from_pairs(pairs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"synthetic config: {exc}") from exc
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    out = Path(args.out or "synth")
    out.mkdir(parents=True, exist_ok=True)
    ds, truth = generate_synthetic(cfg)
    write_csv(ds, out / "data.csv")
    feats = [f for f in truth.feature_names]
    granger = [(c.cause, c.effect) for c in truth.channels]
    granger += [(e, c) for c, e in granger]
    pipe = [
        ("input", "data.csv"),
        ("features", ",".join(feats)),
        ("k_range", "2..5"),
        ("seed", str(cfg.seed)),
        ("granger_window", "1"),
        ("granger_pairs", ",".join(f"{a}>{b}" for a, b in granger)),
        ("out", "run"),
    ]
    if not granger:
        pipe = [p for p in pipe if p[0] != "granger_pairs"]
    (out / "pipeline.cfg").write_text(format_kv(pipe))
    (out / "synth.cfg").write_text(format_kv(_synth_pairs(cfg)))
    truth_json = {
        "feature_names": list(truth.feature_names),
        "group_supports": [sorted(list(e) for e in s) for s in truth.group_supports],
        "player_groups": truth.player_groups,
        "channels": [{"cause": c.cause, "effect": c.effect, "coef": c.coef} for c in truth.channels],
    }
    (out / "truth.json").write_text(json.dumps(truth_json, indent=2, sort_keys=True) + "\n")
    np.savetxt(out / "truth_labels.csv", truth.labels, fmt="%d", header="group", comments="")
    print(json.dumps({"records": len(ds), "players": len(ds.players), "out": str(out)}, sort_keys=True))


def _synth_pairs(cfg: SynthConfig):
    out = []
    for name in ("S", "N", "k", "support", "partial_corr", "players", "ar", "separation", "rank_jitter", "start", "seed"):
        v = getattr(cfg, name)
        if v is not None:
            out.append((name, str(v)))
    if cfg.channels:
        out.append(("channels", ",".join(f"{c.cause}>{c.effect}:{c.coef}" for c in cfg.channels)))
    return out


def cmd_plot(args):
    if args.report:
        rpath = Path(args.report)
    elif args.out:
        rpath = Path(args.out) / "report.json"
    elif args.config:
        rpath = Path(_load_config(args).out) / "report.json"
    else:
        raise CLIError("E_CONFIG", "plot-data needs --report, --out or --config")
    if not rpath.is_file():
        raise FileNotFoundError(f"report not found: {rpath}")
    report = SegmentReport.from_file(rpath)
    if args.kind == "corr_heatmap" and not args.group:
        raise CLIError("E_ARGS", "corr_heatmap needs --group")
    if args.kind == "similarity_heatmap" and not args.metric:
        metrics = ["pearson", "rv"]
    else:
        metrics = [args.metric]
    written = []
    for metric in metrics:
        suffix = "".join(f"_{x}" for x in (args.group, metric) if x)
        target = Path(args.output) if args.output and len(metrics) == 1 else rpath.parent / f"plot_{args.kind}{suffix}.csv"
        written.append(str(emit_plot_data(report, args.kind, target, group=args.group, metric=metric, matrix=args.matrix)))
    print(json.dumps({"written": written}))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="pipeline config (key=value file)")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the configured seed")
    common.add_argument("--out", default=argparse.SUPPRESS, help="override the output directory")

    p = argparse.ArgumentParser(prog="gameseg", description="Segment game players from telemetry.", parents=[common])
    p.add_argument("--version", action="version", version=f"gameseg {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    helps = {
        "ingest": "validate the input and derive calendar flags",
        "cluster": "select k and cluster the records",
        "classify": "assign players to rank classes",
        "glasso": "per-group correlation and sparse graphs",
        "granger": "Granger causality table",
        "similarity": "compare class and cluster matrices and transfer labels",
        "pipeline": "run every stage and write report.json",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text, parents=[common])
        sp.add_argument("--no-cache", action="store_true", help="recompute every stage")

    sp = sub.add_parser("synth", help="write a planted synthetic dataset and a matching config", parents=[common])
    sp.add_argument("--synth-config", help="key=value generator settings")
    sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="generator setting, repeatable")

    sp = sub.add_parser("plot-data", help="write the CSV behind one figure", parents=[common])
    sp.add_argument("--kind", required=True, choices=PLOT_KINDS)
    sp.add_argument("--report", help="report.json (default: <out>/report.json)")
    sp.add_argument("--group", help="group name for corr_heatmap")
    sp.add_argument("--metric", choices=("pearson", "rv"))
    sp.add_argument("--matrix", default="pearson", choices=("pearson", "partial"))
    sp.add_argument("--output", help="output CSV path")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and 2
    for name in ("config", "seed", "out"):
        if not hasattr(args, name):
            setattr(args, name, None)
    try:
        if args.command == "synth":
            cmd_synth(args)
        elif args.command == "plot-data":
            cmd_plot(args)
        else:
            cmd_stage(args, "report" if args.command == "pipeline" else args.command)
    except Exception as exc:  # noqa: BLE001 - every failure becomes one stderr line
        print(f"{_error_code(exc)}: {_message(exc)}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
