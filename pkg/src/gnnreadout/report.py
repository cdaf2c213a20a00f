"""Result aggregation, table rendering and figure output.

The per-run results CSV is the single source of truth (schema frozen:
dataset, conv, readout, class, seed, metric_name, metric_value,
param_count, epochs, wall_time_s). The report path derives a
parameter-count-vs-metric scatter CSV plus one matplotlib figure per
dataset from it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError

RESULTS_COLUMNS = (
    "dataset", "conv", "readout", "class", "seed", "metric_name",
    "metric_value", "param_count", "epochs", "wall_time_s",
)


def write_results_csv(path: str | Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULTS_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def read_results_csv(path: str | Path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != RESULTS_COLUMNS:
            raise FormatError(f"unexpected results CSV header in {path}")
        for ln, row in enumerate(reader, 2):
            if any(row.get(c) is None for c in RESULTS_COLUMNS):
                raise FormatError(f"{path} line {ln}: missing column")
            rows.append(row)
    return rows


@dataclass(frozen=True)
class SummaryRow:
    dataset: str
    conv: str
    readout: str
    readout_class: str  # NON-PAR | PAR | ENS
    metric_name: str
    mean: float
    std: float
    param_count: int
    failed: bool = False


def summarize_runs(rows: list[dict]) -> list[SummaryRow]:
    """Aggregate per-run CSV rows (seed rows only) to mean/std per cell."""
    cells: dict[tuple, list[dict]] = {}
    for row in rows:
        if not str(row["seed"]).lstrip("-").isdigit():
            continue  # skip summary rows
        key = (row["dataset"], row["conv"], row["readout"])
        cells.setdefault(key, []).append(row)
    out = []
    for (ds, conv, readout), runs in sorted(cells.items()):
        values = [float(r["metric_value"]) for r in runs
                  if str(r["metric_value"]) not in ("nan", "")]
        values = [v for v in values if np.isfinite(v)]
        mean = float(np.mean(values)) if values else float("nan")
        std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
        out.append(SummaryRow(ds, conv, readout, runs[0]["class"],
                              runs[0]["metric_name"], mean, std,
                              int(runs[0]["param_count"]),
                              failed=len(values) < len(runs)))
    return out


def render_table(summaries: list[SummaryRow]) -> str:
    """Aligned plain-text table: mean +- std in percent (2 decimals),
    '*' marks the best readout per (dataset, conv) column, '^' the best
    within its readout class."""
    best: dict[tuple, float] = {}
    best_in_class: dict[tuple, float] = {}
    for s in summaries:
        if np.isnan(s.mean):
            continue
        key = (s.dataset, s.conv)
        best[key] = max(best.get(key, -np.inf), s.mean)
        ckey = (s.dataset, s.conv, s.readout_class)
        best_in_class[ckey] = max(best_in_class.get(ckey, -np.inf), s.mean)

    header = f"{'dataset':<16}{'conv':<6}{'class':<9}{'readout':<16}{'params':>10}  metric"
    lines = [header, "-" * len(header)]
    for s in summaries:
        if np.isnan(s.mean):
            cell = "FAILED"
        else:
            cell = f"{s.mean * 100:.2f} +- {s.std * 100:.2f}"
            if s.mean == best.get((s.dataset, s.conv)):
                cell += " *"
            if s.mean == best_in_class.get((s.dataset, s.conv, s.readout_class)):
                cell += " ^"
        lines.append(f"{s.dataset:<16}{s.conv:<6}{s.readout_class:<9}"
                     f"{s.readout:<16}{s.param_count:>10}  {cell}")
    return "\n".join(lines)


def write_table_csv(path: str | Path, summaries: list[SummaryRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dataset", "conv", "readout", "class", "metric_name",
                         "mean", "std", "param_count"])
        for s in summaries:
            writer.writerow([s.dataset, s.conv, s.readout, s.readout_class,
                             s.metric_name, f"{s.mean!r}", f"{s.std!r}", s.param_count])


def params_vs_metric(rows: list[dict]) -> list[SummaryRow]:
    """Scatter data behind the size-vs-efficacy comparison, sorted by
    ascending parameter count."""
    return sorted(summarize_runs(rows), key=lambda s: (s.param_count, s.dataset,
                                                       s.conv, s.readout))


def write_scatter_csv(path: str | Path, summaries: list[SummaryRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dataset", "conv", "readout", "class",
                         "param_count", "metric_mean"])
        for s in summaries:
            writer.writerow([s.dataset, s.conv, s.readout, s.readout_class,
                             s.param_count, f"{s.mean!r}"])


def render_figures(summaries: list[SummaryRow], out_dir: str | Path) -> list[Path]:
    """One parameter-count vs metric scatter per dataset, saved as PNG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    markers = {"gcn": "o", "gat": "s", "gin": "^"}
    colors = {"NON-PAR": "tab:blue", "PAR": "tab:orange", "ENS": "tab:green"}
    written = []
    for dataset in sorted({s.dataset for s in summaries}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for s in summaries:
            if s.dataset != dataset or np.isnan(s.mean):
                continue
            ax.scatter(s.param_count, s.mean * 100,
                       marker=markers.get(s.conv, "o"),
                       color=colors.get(s.readout_class, "gray"),
                       label=f"{s.conv}/{s.readout}")
            ax.annotate(s.readout, (s.param_count, s.mean * 100), fontsize=6,
                        xytext=(3, 3), textcoords="offset points")
        ax.set_xscale("log")
        ax.set_xlabel("trainable parameters")
        ax.set_ylabel("metric (%)")
        ax.set_title(dataset)
        fig.tight_layout()
        path = out_dir / f"params_vs_metric_{dataset}.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written
