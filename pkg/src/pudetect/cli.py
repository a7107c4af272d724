"""Command line entry points.

Subcommands: prepare-data, run-cell, run-grid, sessionize, fit-sessions,
score-sessions. Benchmark outputs are written as delimited files with
figures rendered alongside them.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import bench, report
from .errors import ConfigError, DataError
from .metrics import threshold_at_recall
from .persist import load_model, save_model
from .pu import (DEFAULT_SVM_WEIGHT_GRID, PUSet, fit_biased_svm, fit_eam,
                 fit_mam, fit_ram)
from .sessions import (parse_hits, read_sessions_tsv, sessionize,
                       tag_pu_labels, write_sessions_tsv)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pudetect",
        description="Positive-unlabeled human-vs-bot classification toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare-data",
                       help="encode, split and standardize the raw corpus")
    p.add_argument("--data-dir", required=True,
                   help=f"directory holding {bench.TRAIN_FILE} and {bench.TEST_FILE}")
    p.add_argument("--config", help="YAML config (split section is used)")
    p.add_argument("--out", default="pudetect-out", help="output directory")

    p = sub.add_parser("run-cell", help="run one (topper, mixing, method, seed) cell")
    p.add_argument("--data-dir", required=True,
                   help="directory with raw files or prepared.npz")
    p.add_argument("--topper", type=float, required=True)
    p.add_argument("--mixing", type=float, required=True)
    p.add_argument("--method", required=True,
                   help=f"one of {', '.join(bench.METHODS)}")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="YAML benchmark config")
    p.add_argument("--out", default="pudetect-out")

    p = sub.add_parser("run-grid", help="run the full benchmark grid")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--config", help="YAML benchmark config")
    p.add_argument("--out", default="pudetect-out")

    p = sub.add_parser("sessionize",
                       help="group a hit log into session feature rows")
    p.add_argument("--hits", required=True, help="tab-separated hit log")
    p.add_argument("--cloud-ranges",
                   help="file of CIDR ranges tagged as evaluation negatives")
    p.add_argument("--out", default="pudetect-out")

    p = sub.add_parser("fit-sessions",
                       help="train a PU model on a tagged session file")
    p.add_argument("--sessions", required=True, help="sessions.tsv from sessionize")
    p.add_argument("--method", default="EAM",
                   help=f"one of {', '.join(bench.METHODS)}")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="YAML benchmark config (rf/svm sections)")
    p.add_argument("--out", default="pudetect-out")

    p = sub.add_parser("score-sessions",
                       help="score a session file with a trained model")
    p.add_argument("--model", required=True, help="model file from fit-sessions")
    p.add_argument("--sessions", required=True)
    p.add_argument("--out", default="pudetect-out")
    return parser


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_prepare_data(args) -> int:
    cfg = bench.load_benchmark_config(args.config)
    out = _outdir(args)
    prepared = bench.prepare_data(args.data_dir, cfg.split)
    path = out / bench.PREPARED_FILE
    bench.save_prepared(prepared, path)
    n = prepared.train.y.size + prepared.val.y.size + prepared.test.y.size
    pos = int(prepared.train.y.sum() + prepared.val.y.sum() + prepared.test.y.sum())
    print(f"records: {n} ({pos} legitimate, {n - pos} intrusion)")
    print(f"split: train={prepared.train.y.size} val={prepared.val.y.size} "
          f"test={prepared.test.y.size}, {prepared.feature_dims} feature dims")
    print(f"wrote {path}")
    return 0


def _cmd_run_cell(args) -> int:
    cfg = bench.load_benchmark_config(args.config)
    out = _outdir(args)
    prepared = bench.ensure_prepared(args.data_dir, cfg.split)
    rep = bench.run_cell(prepared, cfg, args.topper, args.mixing, args.method,
                         args.seed)
    path = out / "cell_result.tsv"
    report.write_reports_tsv([rep], path)
    print(f"method={rep.method} t={rep.topper:g} m={rep.mixing:g} seed={rep.seed} "
          f"auc={rep.auc:.4f} pr@r99={rep.precision_at_recall99:.4f} "
          f"threshold={rep.threshold:.4f}")
    print(f"wrote {path}")
    return 0


def _cmd_run_grid(args) -> int:
    cfg = bench.load_benchmark_config(args.config)
    out = _outdir(args)
    prepared = bench.ensure_prepared(args.data_dir, cfg.split)

    def progress(rep):
        status = (f"auc={rep.auc:.4f}" if np.isfinite(rep.auc)
                  else f"FAILED ({rep.notes})")
        print(f"  t={rep.topper:g} m={rep.mixing:g} seed={rep.seed} "
              f"{rep.method}: {status}", flush=True)

    result = bench.run_grid(prepared, cfg, progress=progress)

    report.write_reports_tsv(result.reports, out / "results.tsv")
    report.write_aggregate_tsv(result.aggregates, out / "aggregate.tsv")
    table = report.render_table(result.aggregates, cfg.toppers, cfg.mixings,
                                cfg.methods)
    (out / "summary.txt").write_text(table + "\n")
    figures = report.render_grid_figures(result.aggregates, cfg.toppers,
                                         cfg.mixings, cfg.methods,
                                         out / "figures")
    print()
    print(table)
    print(f"\ngrid finished in {result.elapsed_seconds / 60:.1f} min; "
          f"outputs in {out}")
    for fig in figures:
        print(f"  figure: {fig}")
    return 0


def _cmd_sessionize(args) -> int:
    out = _outdir(args)
    hits, skipped = parse_hits(args.hits)
    sessions = sessionize(hits)
    purchasers = {h.visitor_id for h in hits if h.purchase_flag}
    ranges = ()
    if args.cloud_ranges:
        ranges = Path(args.cloud_ranges).read_text().splitlines()
    table = tag_pu_labels(sessions, purchasers, ranges)
    path = out / "sessions.tsv"
    write_sessions_tsv(table, path)
    print(f"hits: {len(hits)} parsed, {skipped} skipped")
    print(f"sessions: {table.rows} ({int(table.s.sum())} known positive, "
          f"{int(table.eval_negative.sum())} eval negative, "
          f"{table.conflicts} tag conflicts)")
    print(f"wrote {path}")
    return 0


def _session_puset(features, s) -> PUSet:
    n = features.shape[0]
    return PUSet(features=features, s=s,
                 b=np.full(n, -1, dtype=np.int8),
                 y=np.where(s == 1, 1, -1).astype(np.int8),
                 ids=np.arange(n, dtype=np.int64))


def _cmd_fit_sessions(args) -> int:
    cfg = bench.load_benchmark_config(args.config)
    if args.method not in bench.METHODS:
        raise ConfigError(
            f"unknown method {args.method!r}; valid: {', '.join(bench.METHODS)}")
    out = _outdir(args)
    _, features, s, _ = read_sessions_tsv(args.sessions)
    if features.shape[0] == 0:
        raise DataError("session file has no rows")
    if not (s == 1).any() or not (s == 0).any():
        raise DataError("need both labeled and unlabeled sessions to train")

    mean = features.mean(axis=0)
    std = features.std(axis=0)
    constant = std < 1e-12
    std = np.where(constant, 1.0, std)
    z = (features - mean) / std
    z[:, constant] = 0.0

    # hold out a slice for label-frequency estimation and the threshold
    rng = np.random.default_rng(args.seed)
    perm = rng.permutation(z.shape[0])
    n_val = max(1, int(round(0.2 * z.shape[0])))
    val_idx, fit_idx = perm[:n_val], perm[n_val:]
    if not (s[fit_idx] == 1).any() or not (s[fit_idx] == 0).any() \
            or not (s[val_idx] == 1).any():
        raise DataError("too few labeled sessions to hold out a validation slice")
    train_pu = _session_puset(z[fit_idx], s[fit_idx])
    val_pu = _session_puset(z[val_idx], s[val_idx])

    rf_cfg = dataclasses.replace(cfg.rf, seed=bench.derive_seed(args.seed, "sess-rf"))
    if args.method == "EAM":
        model = fit_eam(train_pu, val_pu, rf_cfg)
    elif args.method == "MAM":
        model = fit_mam(train_pu, val_pu, rf_cfg)
    elif args.method == "RAM":
        model = fit_ram(train_pu, rf_cfg,
                        per_positive=cfg.mining_per_positive)
    else:
        svm_cfg = dataclasses.replace(
            cfg.svm, seed=bench.derive_seed(args.seed, "sess-svm"))
        model = fit_biased_svm(train_pu, val_pu,
                               weight_grid=cfg.svm_weight_grid, base_cfg=svm_cfg)

    val_pos_scores = model.score(val_pu.features[val_pu.s == 1])
    threshold = threshold_at_recall(val_pos_scores, cfg.target_recall)
    path = out / "session_model.npz"
    save_model(model, path, scaler=(mean, std),
               extra_meta={"threshold": threshold, "method": args.method,
                           "target_recall": cfg.target_recall})
    print(f"trained {args.method} on {fit_idx.size} sessions "
          f"({int((s[fit_idx] == 1).sum())} labeled)")
    print(f"decision threshold at recall {cfg.target_recall:g}: {threshold:.4f}")
    print(f"wrote {path}")
    return 0


def _cmd_score_sessions(args) -> int:
    out = _outdir(args)
    model, scaler, meta = load_model(args.model)
    meta_rows, features, s, eval_neg = read_sessions_tsv(args.sessions)

    n = features.shape[0]
    if n == 0:
        (out / "scored.tsv").write_text(
            "visitor_id\tstart\tend\tscore\tis_human\ts\teval_negative\n")
        (out / "score_summary.txt").write_text("no sessions\n")
        print("no sessions; wrote empty output")
        return 0

    if scaler is not None:
        mean, std = scaler
        features = (features - mean) / np.where(std == 0, 1.0, std)
        features[:, std == 0] = 0.0
    scores = model.score(features)
    threshold = float(meta.get("threshold", 0.5))
    is_human = scores >= threshold

    path = out / "scored.tsv"
    with open(path, "w") as fh:
        fh.write("visitor_id\tstart\tend\tscore\tis_human\ts\teval_negative\n")
        for i in range(n):
            vid, start, end = meta_rows[i]
            fh.write(f"{vid}\t{start!r}\t{end!r}\t{scores[i]!r}\t"
                     f"{int(is_human[i])}\t{int(s[i])}\t{int(eval_neg[i])}\n")

    groups = (
        ("known positive", s == 1),
        ("eval negative", (s != 1) & (eval_neg == 1)),
        ("unlabeled", (s != 1) & (eval_neg != 1)),
    )
    lines = [f"threshold: {threshold:.4f} "
             f"(recall target {meta.get('target_recall', 'n/a')})",
             f"{'group':<16}{'sessions':>10}{'human':>10}{'bot':>10}{'% human':>10}"]
    for label, mask in groups:
        total = int(mask.sum())
        human = int((mask & is_human).sum())
        pct = 100.0 * human / total if total else 0.0
        lines.append(f"{label:<16}{total:>10}{human:>10}{total - human:>10}"
                     f"{pct:>9.1f}%")
    if not is_human.any():
        lines.append("note: no humans predicted at this threshold")
    summary = "\n".join(lines)
    (out / "score_summary.txt").write_text(summary + "\n")
    report.render_score_histogram(scores, s, eval_neg, threshold,
                                  out / "score_histogram.png")
    print(summary)
    print(f"wrote {path}")
    return 0


_COMMANDS = {
    "prepare-data": _cmd_prepare_data,
    "run-cell": _cmd_run_cell,
    "run-grid": _cmd_run_grid,
    "sessionize": _cmd_sessionize,
    "fit-sessions": _cmd_fit_sessions,
    "score-sessions": _cmd_score_sessions,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, DataError, bench.StageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
