"""Command-line surface for the pipeline.

Subcommands: synth (generate a benchmark pool), score (smoothness measures
from prediction logs), baseline (ATC and weight-norm measures), evaluate
(full metric report), ablate (sweep analyses) and report (pretty-print a
report). All outputs are machine-readable and deterministic for fixed seeds.
"""

from __future__ import annotations

import argparse
import csv
import glob
import io
import json
import os
import sys

from . import __version__
from .baselines import atc_fit, atc_predict, norm_measures
from .errors import DegenerateSampleError, SmoothgenError
from .ingest import (
    atomic_write_text,
    compute_accuracy,
    parse_manifest,
    parse_prediction_log,
    parse_score_log,
    read_weight_dump,
)
from .protocol import build_report
from .smoothness import (
    dataset_smoothness,
    subsample_examples,
    truncate_neighborhood,
)
from .stats import kendall_tau
from .tables import (
    AccuracyRow,
    ScoreRow,
    build_matrix,
    header_comments,
    read_accuracies_csv,
    read_scores_csv,
    write_accuracies_csv,
    write_scores_csv,
)


def _expand_inputs(paths, pattern="*.jsonl"):
    files = []
    for p in paths:
        if os.path.isdir(p):
            files.extend(sorted(glob.glob(os.path.join(p, pattern))))
        else:
            files.append(p)
    if not files:
        raise SmoothgenError(f"no input files found in {paths!r}")
    return files


def _train_domain_map(manifest_path):
    records = parse_manifest(manifest_path)
    return {m.model_id: m for m in records}, records


def cmd_score(inputs, manifest_path, out, variant="both", acc_out=None, meta=None):
    """Smoothness measure CSV (and optionally accuracies) from prediction logs."""
    by_id, _ = _train_domain_map(manifest_path)
    variants = {"both": ("majority", "neg_entropy"), "majority": ("majority",),
                "entropy": ("neg_entropy",)}[variant]
    score_rows, acc_rows = [], []
    for path in _expand_inputs(inputs):
        log = parse_prediction_log(path)
        rec = by_id.get(log.model_id)
        if rec is None:
            raise SmoothgenError(f"{path}: model {log.model_id!r} not in manifest")
        if not rec.converged:
            continue
        tag = log.meta.get("neighborhood", "default")
        for var in variants:
            prefix = "ms" if var == "majority" else "mse"
            score_rows.append(
                ScoreRow(
                    model_id=log.model_id,
                    train_domain=rec.train_domain,
                    test_domain=log.test_domain,
                    measure=f"{prefix}_{tag}",
                    value=dataset_smoothness(log, var),
                )
            )
        if acc_out is not None:
            acc_rows.append(
                AccuracyRow(log.model_id, log.test_domain, compute_accuracy(log))
            )
    write_scores_csv(score_rows, out, meta)
    if acc_out is not None:
        # one accuracy per (model, domain) regardless of neighborhood count
        uniq = {(r.model_id, r.test_domain): r for r in acc_rows}
        write_accuracies_csv(uniq.values(), acc_out, meta)
    return len(score_rows)


def cmd_baseline(score_inputs, weight_inputs, manifest_path, out, acc_out=None,
                 meta=None):
    """ATC accuracy predictions and weight-norm measures as a scores CSV."""
    by_id, _ = _train_domain_map(manifest_path)
    logs = [parse_score_log(p) for p in _expand_inputs(score_inputs)]
    validation = {}
    tests = []
    for log in logs:
        rec = by_id.get(log.model_id)
        if rec is None:
            raise SmoothgenError(f"model {log.model_id!r} not in manifest")
        if not rec.converged:
            continue
        if log.split == "validation":
            validation[log.model_id] = log
        else:
            tests.append(log)
    rows, acc_rows = [], []
    for log in tests:
        rec = by_id[log.model_id]
        val = validation.get(log.model_id)
        if val is None:
            raise SmoothgenError(
                f"model {log.model_id!r}: no validation score log for threshold fitting"
            )
        for kind, name in (("max_confidence", "atc_mc"), ("neg_entropy", "atc_ne")):
            rows.append(
                ScoreRow(
                    model_id=log.model_id,
                    train_domain=rec.train_domain,
                    test_domain=log.domain,
                    measure=name,
                    value=atc_predict(log, atc_fit(val, kind)),
                )
            )
        if acc_out is not None:
            acc_rows.append(AccuracyRow(log.model_id, log.domain, compute_accuracy(log)))
    if weight_inputs:
        domains_by_model = {}
        for log in tests:
            domains_by_model.setdefault(log.model_id, []).append(log.domain)
        for path in _expand_inputs(weight_inputs, pattern="*.bin"):
            dump = read_weight_dump(path)
            rec = by_id.get(dump.model_id)
            if rec is None or not rec.converged:
                continue
            norms = norm_measures(dump)
            for domain in domains_by_model.get(dump.model_id, []):
                for name, value in (
                    ("norm_spectral", norms.spectral),
                    ("norm_frobenius", norms.frobenius),
                ):
                    rows.append(
                        ScoreRow(
                            model_id=dump.model_id,
                            train_domain=rec.train_domain,
                            test_domain=domain,
                            measure=name,
                            value=value,
                        )
                    )
    write_scores_csv(rows, out, meta)
    if acc_out is not None:
        uniq = {(r.model_id, r.test_domain): r for r in acc_rows}
        write_accuracies_csv(uniq.values(), acc_out, meta)
    return len(rows)


def cmd_evaluate(score_csvs, accuracies_csv, manifest_path, out, breakdown_dir=None,
                 tau_variant="b", meta=None):
    """Joined metric report (JSON) plus optional breakdown CSVs."""
    _, manifest = _train_domain_map(manifest_path)
    scores = []
    for path in score_csvs:
        scores.extend(read_scores_csv(path))
    accuracies = read_accuracies_csv(accuracies_csv)
    matrix = build_matrix(manifest, scores, accuracies)
    report = build_report(matrix, tau_variant=tau_variant)
    payload = {"meta": {"tool_version": __version__, **(meta or {})}, **report}
    atomic_write_text(out, json.dumps(payload, sort_keys=True, indent=2) + "\n")
    if breakdown_dir is not None:
        os.makedirs(breakdown_dir, exist_ok=True)
        _write_breakdowns(report, breakdown_dir, meta)
    return report


_BREAKDOWN_COLUMNS = {
    "r2_pairs": ("train_domain", "test_domain"),
    "mae_pairs": ("train_domain", "test_domain"),
    "id_domains": ("domain",),
    "macro_pairs": ("train_domain", "test_domain"),
    "micro_groups": ("arch", "test_domain"),
    "arch_domains": ("test_domain",),
    "cross_domain_models": ("model_id", "arch"),
}


def _write_breakdowns(report, breakdown_dir, meta=None):
    for table, key_cols in _BREAKDOWN_COLUMNS.items():
        buf = io.StringIO()
        for line in header_comments(meta):
            buf.write(line + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("measure",) + key_cols + ("value",))
        for measure in sorted(report["measures"]):
            for row in report["measures"][measure]["breakdown"][table]:
                writer.writerow([measure, *row])
        atomic_write_text(os.path.join(breakdown_dir, f"{table}.csv"), buf.getvalue())


def _ablation_context(artifacts, test_domain=None):
    manifest = parse_manifest(os.path.join(artifacts, "manifest.jsonl"))
    exp_path = os.path.join(artifacts, "experiment.json")
    ablation = {}
    if os.path.exists(exp_path):
        with open(exp_path, "r", encoding="utf-8") as f:
            ablation = json.load(f)["experiment"].get("ablation") or {}
    domain = test_domain or ablation.get("domain_id")
    if domain is None:
        raise SmoothgenError("no ablation domain configured; pass --test-domain")
    pool = [
        m for m in manifest
        if m.converged and m.train_domain != domain
    ]
    if len(pool) < 2:
        raise SmoothgenError(f"ablation pool too small: {len(pool)} models")
    return pool, domain, ablation


def _sweep_tau(logs_by_model, accuracies, transform, variant, tau_variant):
    xs, ys = [], []
    for model_id, log in logs_by_model.items():
        xs.append(dataset_smoothness(transform(log), variant))
        ys.append(accuracies[model_id])
    return kendall_tau(xs, ys, variant=tau_variant), len(xs)


def cmd_ablate(artifacts, kind, out, values=None, variant="majority",
               tau_variant="b", seed=0, test_domain=None, meta=None):
    """Sweep CSV of (value, tau) rows for one ablation kind."""
    pool, domain, ablation = _ablation_context(artifacts, test_domain)
    ab_dir = os.path.join(artifacts, "ablation")

    def load(name):
        logs = {}
        for m in pool:
            path = os.path.join(ab_dir, f"{m.model_id}__{name}.jsonl")
            if os.path.exists(path):
                logs[m.model_id] = parse_prediction_log(path)
        if len(logs) < 2:
            raise SmoothgenError(f"missing ablation logs {name!r} under {ab_dir}")
        return logs

    rows = []

    def sweep(sweep_values, logs_for, transform_for):
        for v in sweep_values:
            try:
                logs = logs_for(v)
                accuracies = {
                    mid: compute_accuracy(log) for mid, log in logs.items()
                }
                tau, n_models = _sweep_tau(
                    logs, accuracies, transform_for(v), variant, tau_variant
                )
                rows.append((v, repr(tau), "ok", n_models))
            except (DegenerateSampleError, ValueError, SmoothgenError) as e:
                rows.append((v, "", f"skipped: {e}", 0))

    if kind == "dataset_size":
        if not values:
            raise SmoothgenError("dataset_size sweep needs --values")
        logs = load("dataset_size")
        sweep(
            values,
            lambda v: logs,
            lambda v: (lambda log: subsample_examples(log, v, seed)),
        )
    elif kind == "n_samples":
        if not values:
            raise SmoothgenError("n_samples sweep needs --values")
        logs = load("n_samples")
        sweep(
            values,
            lambda v: logs,
            lambda v: (lambda log: truncate_neighborhood(log, v)),
        )
    elif kind == "neighborhood_size":
        size_rs = values or [float(r) for r in ablation.get("size_r_values", ())]
        if not size_rs:
            raise SmoothgenError("neighborhood_size sweep needs --values")
        sweep(
            size_rs,
            lambda v: load(f"size_r__{v:g}"),
            lambda v: (lambda log: log),
        )
    else:
        raise SmoothgenError(f"unknown ablation kind {kind!r}")

    buf = io.StringIO()
    run_meta = {"kind": kind, "test_domain": domain, "seed": seed, **(meta or {})}
    for line in header_comments(run_meta):
        buf.write(line + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("value", "tau", "status", "num_models"))
    writer.writerows(rows)
    atomic_write_text(out, buf.getvalue())
    return rows


def cmd_report(report_path, stream=None):
    """Human-readable summary of a metric report."""
    stream = stream or sys.stdout
    with open(report_path, "r", encoding="utf-8") as f:
        report = json.load(f)
    cols = ("r2", "mae_pct", "macro_tau", "micro_tau", "id_tau", "arch_tau",
            "cross_domain_tau")
    name_w = max([len("measure")] + [len(m) for m in report["measures"]])
    print(f"{'measure':<{name_w}} " + " ".join(f"{c:>10}" for c in cols), file=stream)
    for measure in sorted(report["measures"]):
        entry = report["measures"][measure]
        cells = [
            f"{entry[c]:>10.3f}" if entry.get(c) is not None else f"{'--':>10}"
            for c in cols
        ]
        print(f"{measure:<{name_w}} " + " ".join(cells), file=stream)


def _int_list(text):
    return [int(v) for v in text.split(",") if v]


def _float_list(text):
    return [float(v) for v in text.split(",") if v]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smoothgen",
        description="Smoothness-based generalization prediction toolkit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic benchmark pool")
    p.add_argument("--config", help="experiment file (.json or .toml); omit for the default experiment")
    p.add_argument("--out", required=True, help="output artifact directory")
    p.add_argument("--seed", type=int, default=None, help="override the experiment seed")
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("score", help="smoothness scores from prediction logs")
    p.add_argument("--input", nargs="+", required=True, help="prediction logs or directories")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="scores CSV path")
    p.add_argument("--acc-out", help="also write an accuracies CSV here")
    p.add_argument("--variant", choices=("majority", "entropy", "both"), default="both")

    p = sub.add_parser("baseline", help="ATC and weight-norm baseline scores")
    p.add_argument("--scores", nargs="+", required=True, help="score logs or directories")
    p.add_argument("--weights", nargs="*", default=[], help="weight dumps or directories")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--acc-out")

    p = sub.add_parser("evaluate", help="full correlation report")
    p.add_argument("--scores", nargs="+", required=True, help="scores CSV files")
    p.add_argument("--accuracies", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--breakdown-dir")
    p.add_argument("--tau", choices=("b", "a"), default="b")

    p = sub.add_parser("ablate", help="sweep analyses over benchmark artifacts")
    p.add_argument("--artifacts", required=True, help="synth output directory")
    p.add_argument("--kind", required=True,
                   choices=("dataset_size", "n_samples", "neighborhood_size"))
    p.add_argument("--values", help="comma-separated sweep values")
    p.add_argument("--out", required=True)
    p.add_argument("--variant", choices=("majority", "entropy"), default="majority")
    p.add_argument("--tau", choices=("b", "a"), default="b")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--test-domain")

    p = sub.add_parser("report", help="pretty-print a report JSON")
    p.add_argument("--input", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            from .synthbench import default_experiment, load_experiment, run_pool

            if args.config:
                config = load_experiment(args.config)
                if args.seed is not None:
                    config.seed = args.seed
            else:
                config = default_experiment(seed=args.seed or 0)
            result = run_pool(config, args.out, threads=args.threads)
            print(
                f"trained {len(result.manifest)} models, "
                f"{result.num_converged} converged; artifacts in {result.out_dir}"
            )
        elif args.command == "score":
            n = cmd_score(args.input, args.manifest, args.out,
                          variant=args.variant, acc_out=args.acc_out)
            print(f"wrote {n} score rows to {args.out}")
        elif args.command == "baseline":
            n = cmd_baseline(args.scores, args.weights, args.manifest, args.out,
                             acc_out=args.acc_out)
            print(f"wrote {n} score rows to {args.out}")
        elif args.command == "evaluate":
            cmd_evaluate(args.scores, args.accuracies, args.manifest, args.out,
                         breakdown_dir=args.breakdown_dir, tau_variant=args.tau)
            print(f"wrote report to {args.out}")
        elif args.command == "ablate":
            values = None
            if args.values:
                values = (_float_list(args.values) if args.kind == "neighborhood_size"
                          else _int_list(args.values))
            cmd_ablate(args.artifacts, args.kind, args.out, values=values,
                       variant=args.variant, tau_variant=args.tau, seed=args.seed,
                       test_domain=args.test_domain)
            print(f"wrote sweep to {args.out}")
        elif args.command == "report":
            cmd_report(args.input)
    except SmoothgenError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
