"""Command-line entry point: gen-data, train, sweep, report."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import config as cfgmod
from . import io
from .data import parse_mixture
from .experiments import build_eval, build_train, build_tier, run
from .metrics import seed_spread, spearman, weight_summary
from .trainer import EmptyDataError, RunReport, TrainingDiverged, train

logger = logging.getLogger("resure")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4

OUTPUT_ROOT_ENV = "RESURE_OUTPUT_ROOT"

SWEEP_COLUMNS = ("setting", "complexity_rank", "strategy", "seed", "status",
                 "eval_accuracy", "mean_weight_clean", "mean_weight_noisy",
                 "detection_precision", "detection_recall", "spearman_eval_accuracy")
REPORT_COLUMNS = ("run", "strategy", "setting", "seed", "eval_accuracy",
                  "detection_precision", "detection_recall",
                  "mean_weight_clean", "mean_weight_noisy", "run_config_hash")


def resolve_out(arg: str | None, exp: cfgmod.ExperimentConfig | None, default: str) -> Path:
    out = Path(arg or (exp.output["dir"] if exp else default))
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not out.is_absolute():
        out = Path(root) / out
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_run(report: RunReport, out: Path, config_hash: str, formats) -> None:
    if "csv" in formats:
        io.write_csv(out / "metrics.csv", report.epochs, io.EPOCH_COLUMNS, config_hash)
        io.write_csv(out / "steps.csv", report.steps, io.STEP_COLUMNS, config_hash)
        io.write_csv(out / "stats.csv", report.snapshots, io.SNAPSHOT_COLUMNS, config_hash)
        io.write_csv(out / "trace.csv", report.trace, io.TRACE_COLUMNS, config_hash)
    if "json" in formats:
        io.write_json(out / "summary.json", {
            "config_hash": config_hash,
            "config": report.config,
            "summary": report.summary,
            "epochs": report.epochs,
        })


def cmd_gen_data(args) -> int:
    exp = cfgmod.load(args.config)
    out = resolve_out(args.out, exp, "data")
    d = exp.data
    h = exp.hash
    files = {}
    for tier in parse_mixture(d.mixture):
        samples = build_tier(d, tier, d.seed)
        name = f"tier_{tier.value}.jsonl"
        io.write_samples(out / name, samples, h)
        files[name] = {"count": len(samples), "noisy": sum(s.is_noisy for s in samples)}
    train_data = build_train(d, d.seed)
    eval_data = build_eval(d, d.seed)
    for name, samples in (("train.jsonl", train_data), ("eval.jsonl", eval_data)):
        io.write_samples(out / name, samples, h)
        files[name] = {"count": len(samples), "noisy": sum(s.is_noisy for s in samples)}
    io.write_json(out / "manifest.json", {
        "config_hash": h,
        "seed": d.seed,
        "mixture": d.mixture,
        "per_tier": d.per_tier,
        "eval_size": d.eval_size,
        "drift_fraction": d.drift_fraction,
        "files": files,
    })
    logger.info("wrote %d files to %s", len(files), out)
    return EXIT_OK


def cmd_train(args) -> int:
    exp = cfgmod.load(args.config)
    data_dir = Path(args.data)
    train_data = io.read_samples(data_dir / "train.jsonl")
    eval_data = io.read_samples(data_dir / "eval.jsonl")
    out = resolve_out(args.out, exp, "runs")
    echo = {"experiment": exp.raw, "config_hash": exp.hash, "data_path": str(data_dir.resolve())}
    report = train(exp.train, train_data, eval_data, echo=echo)
    write_run(report, out, exp.hash, exp.output["formats"])
    s = report.summary
    logger.info("%s: eval accuracy %.4f", exp.train.strategy, s["final_eval_accuracy"])
    return EXIT_OK


def _sweep_job(raw: dict, mixture: str, strategy: str, seed: int) -> dict:
    exp = cfgmod.parse(raw)
    row = {"setting": mixture, "strategy": strategy, "seed": seed}
    try:
        s = run(exp, strategy, seed, mixture).summary
    except TrainingDiverged as exc:
        return {**row, "status": f"diverged@{exc.step}"}
    return {
        **row,
        "status": "ok",
        "eval_accuracy": s["final_eval_accuracy"],
        "mean_weight_clean": s["mean_weight_clean"],
        "mean_weight_noisy": s["mean_weight_noisy"],
        "detection_precision": s["detection_precision"],
        "detection_recall": s["detection_recall"],
    }


def sweep(exp: cfgmod.ExperimentConfig, jobs: int = 1) -> tuple[list[dict], dict]:
    sw = exp.sweep
    mixtures = sw["mixtures"]
    for m in mixtures:
        parse_mixture(m)
    combos = [(m, s, seed) for m in mixtures for s in sw["strategies"] for seed in sw["seeds"]]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_sweep_job, exp.raw, *c) for c in combos]
            rows = [f.result() for f in futures]
    else:
        rows = [_sweep_job(exp.raw, *c) for c in combos]

    rank = {m: i + 1 for i, m in enumerate(mixtures)}
    correlations = {}
    for strategy in sw["strategies"]:
        xs, ys = [], []
        for m in mixtures:
            acc = [r["eval_accuracy"] for r in rows
                   if r["strategy"] == strategy and r["setting"] == m and r["status"] == "ok"]
            if acc:
                xs.append(rank[m])
                ys.append(seed_spread(acc)[0])
        correlations[strategy] = spearman(xs, ys) if len(xs) >= 2 else None
    for r in rows:
        r["complexity_rank"] = rank[r["setting"]]
        r["spearman_eval_accuracy"] = correlations[r["strategy"]]
    return rows, correlations


def cmd_sweep(args) -> int:
    exp = cfgmod.load(args.config)
    if exp.sweep is None:
        raise cfgmod.ConfigError("invalid config: sweep: section is required for the sweep command")
    out = resolve_out(args.out, exp, "sweep")
    rows, correlations = sweep(exp, args.jobs)
    io.write_csv(out / "sweep.csv", rows, SWEEP_COLUMNS, exp.hash)
    io.write_csv(out / "spearman.csv",
                 [{"strategy": s, "metric": "eval_accuracy", "spearman": v}
                  for s, v in correlations.items()],
                 ("strategy", "metric", "spearman"), exp.hash)
    for s, v in correlations.items():
        logger.info("spearman[%s] = %s", s, v)
    failed = [r for r in rows if r["status"] != "ok"]
    if failed:
        logger.error("%d of %d runs failed", len(failed), len(rows))
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_report(args) -> int:
    runs_dir = Path(args.runs)
    summaries = sorted(runs_dir.glob("**/summary.json"))
    if not summaries:
        raise io.DataError(f"{runs_dir}: no run summaries found")
    rows = []
    hashes = set()
    for path in summaries:
        doc = json.loads(path.read_text())
        hashes.add(doc["config_hash"])
        conf = doc["config"]
        s = doc["summary"]
        steps = io.read_csv(path.parent / "steps.csv")
        data_path = Path(conf["data_path"]) / "train.jsonl"
        truth = {x.id: x.is_noisy for x in io.read_samples(data_path)}
        final_epoch = max(int(r["epoch"]) for r in steps)
        ws = weight_summary([r for r in steps if int(r["epoch"]) == final_epoch], truth)[final_epoch]
        exp_train = conf["experiment"].get("train", {})
        rows.append({
            "run": str(path.parent.relative_to(runs_dir)),
            "strategy": s["strategy"],
            "setting": conf["experiment"].get("data", {}).get("mixture", "H+N+L"),
            "seed": exp_train.get("seed", 0),
            "eval_accuracy": s["final_eval_accuracy"],
            "detection_precision": s["detection_precision"],
            "detection_recall": s["detection_recall"],
            "mean_weight_clean": ws["clean"].mean if ws["clean"] else None,
            "mean_weight_noisy": ws["noisy"].mean if ws["noisy"] else None,
            "run_config_hash": doc["config_hash"],
        })
    out = Path(args.out) if args.out else runs_dir
    out.mkdir(parents=True, exist_ok=True)
    io.write_csv(out / "report.csv", rows, REPORT_COLUMNS)
    if len(hashes) > 1:
        logger.warning("report joins runs from %d different configs", len(hashes))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="resure", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate synthetic datasets")
    g.add_argument("--config", required=True)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train one configuration on a generated dataset")
    t.add_argument("--config", required=True)
    t.add_argument("--data", required=True, help="directory written by gen-data")
    t.add_argument("--out")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="run every (mixture, strategy, seed) combination")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    r = sub.add_parser("report", help="join run directories into one table")
    r.add_argument("--runs", required=True)
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (io.DataError, EmptyDataError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
