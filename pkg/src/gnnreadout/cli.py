"""Experiment CLI: run a single config, sweep a grid, or build reports."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import (
    ExperimentConfig,
    GridConfig,
    load_config,
    load_grid_config,
    replace_config,
)
from .datasets import load_dataset
from .errors import GnnReadoutError
from .readouts import readout_class
from .report import (
    RESULTS_COLUMNS,
    params_vs_metric,
    read_results_csv,
    render_figures,
    render_table,
    summarize_runs,
    write_results_csv,
    write_scatter_csv,
    write_table_csv,
)
from .training import RunResult, RunSummary, run_repeated


def _result_rows(cfg: ExperimentConfig, results: list[RunResult],
                 summary: RunSummary) -> list[dict]:
    cls = readout_class(cfg.readout)
    rows = []
    for r in results:
        rows.append({
            "dataset": cfg.dataset, "conv": cfg.conv, "readout": cfg.readout,
            "class": cls, "seed": r.seed, "metric_name": r.metric_name,
            "metric_value": repr(r.metric_value), "param_count": r.param_count,
            "epochs": r.epochs, "wall_time_s": f"{r.wall_time_s:.3f}",
        })
    for suffix, value in ((f"{summary.metric_name}_mean", summary.mean),
                          (f"{summary.metric_name}_std", summary.std)):
        rows.append({
            "dataset": cfg.dataset, "conv": cfg.conv, "readout": cfg.readout,
            "class": cls, "seed": "summary", "metric_name": suffix,
            "metric_value": repr(value), "param_count": summary.param_count,
            "epochs": "", "wall_time_s": "",
        })
    return rows


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    kw = {}
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.repeats is not None:
        kw["repeats"] = args.repeats
    if args.out_dir is not None:
        kw["out_dir"] = args.out_dir
    if args.data_dir is not None:
        kw["data_dir"] = args.data_dir
    return replace_config(cfg, **kw) if kw else cfg


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> tuple[list[RunResult], RunSummary, list[dict]]:
    dataset = load_dataset(cfg.dataset, cfg.data_dir or None)
    results, summary = run_repeated(
        dataset, cfg.model_settings(), cfg.train_settings(),
        n_repeats=cfg.repeats, seed_base=cfg.seed,
        log_dir=Path(cfg.out_dir) / "logs" / f"{cfg.dataset}_{cfg.conv}_{cfg.readout}",
        threads=threads,
    )
    return results, summary, _result_rows(cfg, results, summary)


def cmd_run(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results, summary, rows = run_experiment(cfg, threads=args.threads)
    csv_path = out_dir / "results.csv"
    write_results_csv(csv_path, rows)
    pct = 100.0
    print(f"{cfg.dataset} {cfg.conv} {cfg.readout}: "
          f"{summary.metric_name} = {summary.mean * pct:.2f} +- {summary.std * pct:.2f} "
          f"({summary.n} runs, {summary.param_count} params)")
    print(f"wrote {csv_path}")
    if summary.partial:
        print("warning: some repetitions failed; summary is partial", file=sys.stderr)
        return 1
    return 0


def cmd_grid(args) -> int:
    grid = load_grid_config(args.config)
    base = _apply_overrides(grid.base, args)
    grid = GridConfig(grid.datasets, grid.convs, grid.readouts, base)
    out_dir = Path(base.out_dir if args.out_dir is None else args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    all_rows: list[dict] = []
    any_failed = False
    for cfg in grid.cells():
        try:
            _, summary, rows = run_experiment(cfg, threads=args.threads)
            all_rows.extend(rows)
            print(f"done: {cfg.dataset}/{cfg.conv}/{cfg.readout} "
                  f"mean={summary.mean * 100:.2f}")
        except GnnReadoutError as e:
            # grid cells fail independently; completed work is kept
            any_failed = True
            print(f"cell failed: {cfg.dataset}/{cfg.conv}/{cfg.readout}: {e}",
                  file=sys.stderr)
    csv_path = out_dir / "results.csv"
    write_results_csv(csv_path, all_rows)
    summaries = summarize_runs(all_rows)
    write_table_csv(out_dir / "table.csv", summaries)
    table = render_table(summaries)
    (out_dir / "table.txt").write_text(table + "\n")
    print(table)
    print(f"wrote {csv_path}")
    return 1 if any_failed else 0


def cmd_report(args) -> int:
    rows = read_results_csv(args.results)
    out_dir = Path(args.out_dir or Path(args.results).parent)
    out_dir.mkdir(parents=True, exist_ok=True)
    scatter = params_vs_metric(rows)
    scatter_path = out_dir / "params_vs_metric.csv"
    write_scatter_csv(scatter_path, scatter)
    figures = render_figures(scatter, out_dir)
    print(f"wrote {scatter_path}")
    for fig in figures:
        print(f"wrote {fig}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gnnreadout",
        description="Graph classification/regression experiments over "
                    "message-passing networks and readout functions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--repeats", type=int, default=None)
        p.add_argument("--out-dir", default=None)
        p.add_argument("--data-dir", default=None,
                       help="dataset root (fallback: $DATASET_DIR)")
        p.add_argument("--threads", type=int, default=1)

    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("config")
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_grid = sub.add_parser("grid", help="run a datasets x convs x readouts grid")
    p_grid.add_argument("config")
    common(p_grid)
    p_grid.set_defaults(func=cmd_grid)

    p_rep = sub.add_parser("report", help="scatter CSV + figures from a results CSV")
    p_rep.add_argument("results")
    p_rep.add_argument("--out-dir", default=None)
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except GnnReadoutError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
