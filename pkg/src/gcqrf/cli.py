"""Command-line entry points.

Every command validates its flags, is deterministic given --seed, writes a
run manifest next to its outputs, and exits 0 on success, 2 on usage errors,
3 on data errors, 4 on numeric failures. Report-producing commands
(benchmark, importance) also render figures beside the CSV unless
--no-figures is passed.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from dataclasses import replace
from datetime import datetime, timezone

import numpy as np

from . import bench, figures
from .data import (Dataset, load_config, load_model, read_csv, save_model,
                   write_csv)
from .errors import (BadInput, CalibrationFailure, DegenerateBaseline,
                     EmptyNode, FoldDegenerate, GcqrfError, InvalidTau,
                     KnockoffFailure, NoOOBCoverage, NoUncensored, ParseError,
                     UnsupportedVersion)
from .evaluate import (default_eval_grid, ipcw_iqloss, iqmse, na_baseline,
                       relative_metric, standard_iqloss)
from .forest import (ForestConfig, fit_forest, paper_tuning_space,
                     predict_matrix, reduced_tuning_space, tune)
from .importance import MuteStrategy, importance_cross_fit
from .loss import TauGrid
from .simdata import FKind, GKind, SimSetting, gen_dataset, vimp_preset
from .survival import censoring_fit
from .tree import TreeConfig

DATA_ERRORS = (ParseError, BadInput, EmptyNode, InvalidTau, NoUncensored,
               FoldDegenerate, UnsupportedVersion, FileNotFoundError)
NUMERIC_ERRORS = (CalibrationFailure, KnockoffFailure, DegenerateBaseline,
                  NoOOBCoverage, FloatingPointError)


def parse_tau_grid(text: str) -> TauGrid:
    parts = text.split(":")
    if len(parts) != 3:
        raise BadInput(f"tau grid must be start:end:step, got {text!r}")
    try:
        start, end, step = (float(v) for v in parts)
    except ValueError:
        raise BadInput(f"non-numeric tau grid {text!r}") from None
    return TauGrid.regular(start, end, step)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_path: str, command: str, args: argparse.Namespace,
                   inputs: list, outputs: list) -> None:
    doc = {
        "command": command,
        "argv": sys.argv[1:],
        "seed": getattr(args, "seed", None),
        "config": getattr(args, "config", None),
        "inputs": {p: sha256_file(p) for p in inputs},
        "outputs": list(outputs),
        "created_at": datetime.now(timezone.utc).isoformat(),
    }
    with open(out_path + ".manifest.json", "w") as fh:
        json.dump(doc, fh, indent=1)


def default_config(p: int, seed: int, ntree: int, grid: TauGrid) -> ForestConfig:
    return ForestConfig(
        tree=TreeConfig(mtry=max(1, round(0.3 * p)), grid=grid),
        ntree=ntree, seed=seed)


def pick_space(kind: str, n: int):
    return paper_tuning_space(n) if kind == "paper" else reduced_tuning_space(n)


# ---------------------------------------------------------------------------
# simulate

def cmd_simulate(args) -> int:
    if args.setting == "vimp":
        setting = vimp_preset(GKind(args.g), rho=args.rho, n=args.n,
                              seed=args.seed, target_censoring=args.censoring)
    else:
        setting = SimSetting(f_kind=FKind(args.setting), g_kind=GKind(args.g),
                             n=args.n, p=args.p, snr=args.snr,
                             target_censoring=args.censoring, seed=args.seed)
    sim = gen_dataset(setting)
    write_csv(sim.dataset, args.out)
    oracle_path = args.out.rsplit(".", 1)[0] + ".oracle.csv"
    grid = default_eval_grid()
    truth = sim.oracle.matrix(sim.dataset.X, grid.levels)
    with open(oracle_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "tau", "quantile"])
        for i in range(sim.dataset.n):
            for j, tau in enumerate(grid.levels):
                writer.writerow([i, repr(float(tau)), repr(float(truth[i, j]))])
    write_manifest(args.out, "simulate", args, [], [args.out, oracle_path])
    print(f"wrote {args.out} ({sim.dataset.n} rows, censoring "
          f"{1 - sim.dataset.delta.mean():.3f}) and {oracle_path}")
    return 0


# ---------------------------------------------------------------------------
# train

def cmd_train(args) -> int:
    dataset = read_csv(args.data, args.y_col, args.delta_col)
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = default_config(dataset.p, args.seed, args.ntree,
                             default_eval_grid())
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.tune:
        cfg, table = tune(dataset, pick_space(args.tune_grid, dataset.n), cfg,
                          tuning_ntree=args.tuning_ntree, n_jobs=args.threads)
        best = min(table, key=lambda r: r["oob_iqloss"])
        print(f"tuned over {len(table)} cells; best oob loss "
              f"{best['oob_iqloss']:.6g}")
    forest = fit_forest(dataset, cfg, n_jobs=args.threads)
    save_model(forest, args.out)
    write_manifest(args.out, "train", args,
                   [args.data] + ([args.config] if args.config else []),
                   [args.out])
    print(f"wrote {args.out} ({forest.ntree} trees, u={forest.u_resolved:.6g})")
    return 0


# ---------------------------------------------------------------------------
# predict

def read_features(path, y_col, delta_col):
    """Features from a CSV; y/delta columns are dropped when present."""
    with open(path, newline="") as fh:
        header = next(csv.reader(fh), None)
    if header is None:
        raise ParseError(f"{path}: empty file")
    if y_col in header and delta_col in header:
        ds = read_csv(path, y_col, delta_col)
        return ds.X, ds
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = []
        for rownum, rec in enumerate(reader, start=2):
            try:
                rows.append([float(v) for v in rec])
            except ValueError:
                raise ParseError(f"{path}: non-numeric cell",
                                 row=rownum) from None
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return np.asarray(rows, dtype=np.float64), None


def write_predictions(path, preds, grid: TauGrid) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row"] + [f"tau_{t:g}" for t in grid.levels])
        for i in range(preds.shape[0]):
            writer.writerow([i] + [repr(float(v)) for v in preds[i]])


def read_predictions(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2 or header[0] != "row":
            raise ParseError(f"{path}: not a predictions file")
        try:
            levels = [float(h.split("tau_", 1)[1]) for h in header[1:]]
        except (IndexError, ValueError):
            raise ParseError(f"{path}: bad tau columns") from None
        rows = []
        for rownum, rec in enumerate(reader, start=2):
            try:
                rows.append([float(v) for v in rec[1:]])
            except ValueError:
                raise ParseError(f"{path}: non-numeric cell",
                                 row=rownum) from None
    return TauGrid(np.asarray(levels)), np.asarray(rows, dtype=np.float64)


def cmd_predict(args) -> int:
    forest = load_model(args.model)
    X, _ = read_features(args.data, args.y_col, args.delta_col)
    grid = parse_tau_grid(args.tau_grid)
    preds = predict_matrix(forest, X, grid)
    write_predictions(args.out, preds, grid)
    write_manifest(args.out, "predict", args, [args.model, args.data],
                   [args.out])
    print(f"wrote {args.out} ({preds.shape[0]} rows x {preds.shape[1]} levels)")
    return 0


# ---------------------------------------------------------------------------
# evaluate

def read_oracle_csv(path, n_rows: int, grid: TauGrid) -> np.ndarray:
    by_row: dict = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["row", "tau", "quantile"]:
            raise ParseError(f"{path}: expected columns row,tau,quantile")
        for rec in reader:
            by_row.setdefault(int(rec[0]), {})[float(rec[1])] = float(rec[2])
    out = np.empty((n_rows, len(grid)))
    for i in range(n_rows):
        if i not in by_row:
            raise ParseError(f"{path}: missing oracle rows", row=i)
        for j, tau in enumerate(grid.levels):
            match = [v for t, v in by_row[i].items() if abs(t - tau) < 1e-9]
            if not match:
                raise ParseError(f"{path}: no oracle value at tau={tau:g}",
                                 row=i)
            out[i, j] = match[0]
    return out


def cmd_evaluate(args) -> int:
    grid, preds = read_predictions(args.pred)
    dataset = read_csv(args.data, args.y_col, args.delta_col) if args.data else None
    rows = []

    def metric_for(pred_matrix) -> float:
        if args.metric == "iqmse":
            if not args.oracle:
                raise BadInput("iqmse needs --oracle")
            truth = read_oracle_csv(args.oracle, preds.shape[0], grid)
            return iqmse(pred_matrix, truth, grid)
        if dataset is None:
            raise BadInput(f"{args.metric} needs --data")
        if args.metric == "ipcw-iqloss":
            u = float(np.quantile(dataset.y, 0.95))
            g_hat = censoring_fit(dataset.y, dataset.delta, u)
            return ipcw_iqloss(dataset.y, dataset.delta, pred_matrix, grid,
                               u, g_hat)
        return standard_iqloss(dataset.y, pred_matrix, grid)

    value = metric_for(preds)
    rows.append({"method": "model", "metric": args.metric, "value": value})
    if args.baseline == "na":
        if dataset is None:
            raise BadInput("--baseline na needs --data")
        base = na_baseline(dataset.y, dataset.delta, grid)
        base_preds = np.tile(base.values, (preds.shape[0], 1))
        base_value = metric_for(base_preds)
        rows.append({"method": "na", "metric": args.metric,
                     "value": base_value})
        rows.append({"method": "model", "metric": f"relative-{args.metric}",
                     "value": relative_metric(value, base_value)})
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["setting", "snr", "method", "metric", "value", "seed"])
        for r in rows:
            writer.writerow(["", "", r["method"], r["metric"],
                             repr(float(r["value"])), ""])
    write_manifest(args.out, "evaluate", args,
                   [p for p in (args.pred, args.data, args.oracle) if p],
                   [args.out])
    for r in rows:
        print(f"{r['method']:>8} {r['metric']}: {r['value']:.6g}")
    return 0


# ---------------------------------------------------------------------------
# importance

def cmd_importance(args) -> int:
    dataset = read_csv(args.data, args.y_col, args.delta_col)
    if args.groups:
        with open(args.groups) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{args.groups}: invalid JSON: {exc}") from None
        groups, names = [], []
        for entry in doc:
            cols = entry["columns"] if isinstance(entry, dict) else entry
            idx = []
            for c in cols:
                if c not in dataset.columns:
                    raise ParseError(f"{args.groups}: unknown column",
                                     column=c)
                idx.append(dataset.columns.index(c))
            groups.append(idx)
            names.append(entry.get("name", "+".join(cols))
                         if isinstance(entry, dict) else "+".join(cols))
    else:
        groups = [[j] for j in range(dataset.p)]
        names = list(dataset.columns)
    grid = parse_tau_grid(args.tau_grid)
    cfg = default_config(dataset.p, args.seed, args.ntree, grid)
    report = importance_cross_fit(
        dataset, groups, args.k, MuteStrategy(args.strategy), cfg,
        pick_space(args.tune_grid, dataset.n), grid, seed=args.seed,
        tuning_ntree=args.tuning_ntree, group_names=names,
        n_jobs=args.threads)
    report.to_csv(args.out)
    outputs = [args.out]
    if not args.no_figures:
        fig_path = args.out.rsplit(".", 1)[0] + ".png"
        figures.importance_chart(report, fig_path)
        outputs.append(fig_path)
    write_manifest(args.out, "importance", args,
                   [args.data] + ([args.groups] if args.groups else []),
                   outputs)
    order = np.argsort(-report.rank)
    print("rank (most important first): "
          + ", ".join(report.group_names[i] for i in order))
    return 0


# ---------------------------------------------------------------------------
# benchmark

def load_settings(path, seed: int) -> list:
    if path is None:
        return [SimSetting(f_kind=FKind.NONLINEAR, g_kind=GKind.HOMO,
                           n=100, p=10, seed=seed)]
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON: {exc}") from None
    out = []
    for entry in doc:
        try:
            out.append(SimSetting(
                f_kind=FKind(entry["f"]), g_kind=GKind(entry["g"]),
                n=int(entry["n"]), p=int(entry["p"]),
                target_censoring=float(entry.get("censoring", 0.3)),
                seed=seed))
        except (KeyError, ValueError) as exc:
            raise ParseError(f"{path}: bad setting entry: {exc}") from None
    return out


def cmd_benchmark(args) -> int:
    settings = load_settings(args.settings, args.seed)
    if args.snr_grid == "paper":
        from .simdata import paper_snr_grid
        snrs = list(paper_snr_grid())
    else:
        try:
            snrs = [float(v) for v in args.snr_grid.split(",")]
        except ValueError:
            raise BadInput(f"bad --snr-grid {args.snr_grid!r}") from None
    cfg_for = lambda s: default_config(s.p + 1, args.seed, args.ntree,
                                       default_eval_grid())
    rows = []
    for setting in settings:
        rows.extend(bench.run_benchmark(
            [setting], snrs, args.reps, args.seed, base_cfg=cfg_for(setting),
            space=pick_space(args.tune_grid, setting.n), ntree=args.ntree,
            tuning_ntree=args.tuning_ntree, n_jobs=args.threads,
            progress=(lambda s, snr, rep: print(
                f"  done {bench.setting_label(s)} snr={snr:g} rep={rep}",
                flush=True)) if args.verbose else None))
    bench.write_rows(rows, args.out)
    outputs = [args.out]
    if not args.no_figures:
        fig_path = args.out.rsplit(".", 1)[0] + ".png"
        figures.benchmark_curves(rows, fig_path)
        outputs.append(fig_path)
    write_manifest(args.out, "benchmark", args,
                   [args.settings] if args.settings else [], outputs)
    print(f"wrote {args.out} ({len(rows)} metric rows)")
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gcqrf",
        description="Censored quantile random forests: simulate, train, "
                    "predict, evaluate, rank feature importance, benchmark.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--y-col", default="y")
        p.add_argument("--delta-col", default="delta")

    p = sub.add_parser("simulate", help="generate a synthetic dataset + oracle")
    common(p)
    p.add_argument("--setting", choices=["linear", "nonlinear", "vimp"],
                   required=True)
    p.add_argument("--g", choices=["homo", "hete"], default="homo")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--p", type=int, default=10)
    p.add_argument("--snr", type=float, default=1.5)
    p.add_argument("--censoring", type=float, default=0.3)
    p.add_argument("--rho", type=float, default=0.0,
                   help="feature correlation for the vimp preset")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="fit (optionally tune) a forest")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--tune", action="store_true")
    p.add_argument("--tune-grid", choices=["reduced", "paper"],
                   default="paper")
    p.add_argument("--tuning-ntree", type=int, default=100)
    p.add_argument("--ntree", type=int, default=500)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict quantile processes")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--tau-grid", default="0.05:0.5:0.05")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score saved predictions")
    common(p)
    p.add_argument("--pred", required=True)
    p.add_argument("--data")
    p.add_argument("--oracle")
    p.add_argument("--metric",
                   choices=["iqmse", "ipcw-iqloss", "standard-iqloss"],
                   required=True)
    p.add_argument("--baseline", choices=["na"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("importance", help="cross-fitted importance ranking")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--groups", help="JSON list of column-name groups")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--strategy", choices=["drop", "permute", "knockoff"],
                   required=True)
    p.add_argument("--tau-grid", default="0.05:0.5:0.05")
    p.add_argument("--tune-grid", choices=["reduced", "paper"],
                   default="reduced")
    p.add_argument("--tuning-ntree", type=int, default=50)
    p.add_argument("--ntree", type=int, default=200)
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_importance)

    p = sub.add_parser("benchmark", help="settings x SNR x reps sweep")
    common(p)
    p.add_argument("--settings", help="JSON settings file; default one "
                                      "nonlinear-homo-low setting")
    p.add_argument("--snr-grid", default="0.05,1.5,6",
                   help='comma list or "paper"')
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--ntree", type=int, default=200)
    p.add_argument("--tune-grid", choices=["reduced", "paper"],
                   default="reduced")
    p.add_argument("--tuning-ntree", type=int, default=100)
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--verbose", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NUMERIC_ERRORS as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    except GcqrfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
