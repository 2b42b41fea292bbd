"""Figure emission from persisted sweep/search CSVs.

Emits, per run directory: stable-rank-vs-epoch curves, per-edge architecture
weight curves, and train/val error curves; plus an accuracy-vs-params
scatter at the sweep root. Every figure is backed by the CSV it was drawn
from. Missing series are reported and skipped.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _read_csv(path: Path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        rows = list(reader)
    return header, rows


def _plot_metrics(metrics_path: Path, out_files: list, warnings: list) -> None:
    header, rows = _read_csv(metrics_path)
    if not rows:
        warnings.append(f"{metrics_path}: no rows")
        return
    run_dir = metrics_path.parent
    epochs = [int(r[0]) for r in rows]
    cols = {name: i for i, name in enumerate(header)}

    s_cols = [name for name in header if name.startswith("S_")]
    if s_cols:
        fig, ax = plt.subplots(figsize=(7, 4))
        for name in s_cols:
            ax.plot(epochs, [float(r[cols[name]]) for r in rows],
                    label=name[2:], linewidth=0.8)
        ax.set_xlabel("epoch")
        ax.set_ylabel("stable rank")
        ax.set_ylim(-0.02, 1.02)
        if len(s_cols) <= 12:
            ax.legend(fontsize=5)
        target = run_dir / "stable_rank.png"
        fig.savefig(target, dpi=120, bbox_inches="tight")
        plt.close(fig)
        out_files.append(target)

    fig, ax = plt.subplots(figsize=(6, 4))
    for split in ("train", "val"):
        ax.plot(epochs, [100.0 - 100.0 * float(r[cols[f"{split}_acc"]]) for r in rows],
                label=f"{split} error")
    ax.set_xlabel("epoch")
    ax.set_ylabel("error (%)")
    ax.legend()
    target = run_dir / "errors.png"
    fig.savefig(target, dpi=120, bbox_inches="tight")
    plt.close(fig)
    out_files.append(target)


def _plot_alpha(alpha_path: Path, out_files: list, warnings: list) -> None:
    header, rows = _read_csv(alpha_path)
    if not rows:
        warnings.append(f"{alpha_path}: no rows")
        return
    run_dir = alpha_path.parent
    series = {}  # (kind, edge, op) -> (epochs, weights)
    for epoch, kind, edge, op, weight in rows:
        key = (kind, int(edge), op)
        series.setdefault(key, ([], []))
        series[key][0].append(int(epoch))
        series[key][1].append(float(weight))
    kinds = sorted({k for k, _, _ in series})
    fig, axes = plt.subplots(1, len(kinds), figsize=(6 * len(kinds), 4), squeeze=False)
    for ax, kind in zip(axes[0], kinds):
        for (k, edge, op), (xs, ys) in sorted(series.items()):
            if k == kind:
                ax.plot(xs, ys, linewidth=0.7)
        ax.set_title(f"{kind} edges")
        ax.set_xlabel("epoch")
        ax.set_ylabel("softmax weight")
    target = run_dir / "alpha_weights.png"
    fig.savefig(target, dpi=120, bbox_inches="tight")
    plt.close(fig)
    out_files.append(target)


def _plot_scatter(results_path: Path, out_files: list, warnings: list) -> None:
    header, rows = _read_csv(results_path)
    if not rows:
        warnings.append(f"{results_path}: empty results, scatter skipped")
        return
    cols = {name: i for i, name in enumerate(header)}
    fig, ax = plt.subplots(figsize=(6, 4))
    for row in rows:
        x = float(row[cols["params"]]) / 1e6
        y = float(row[cols["acc_mean"]])
        label = f"c{row[cols['cells']]}/n{row[cols['nodes']]}/{row[cols['optimizer']]}"
        ax.scatter(x, y)
        ax.annotate(label, (x, y), fontsize=6)
    ax.set_xlabel("params (M)")
    ax.set_ylabel("accuracy (%)")
    target = results_path.parent / "accuracy_vs_params.png"
    fig.savefig(target, dpi=120, bbox_inches="tight")
    plt.close(fig)
    out_files.append(target)


def emit_plots(out_dir) -> dict:
    """Render every known figure under ``out_dir``; returns files + warnings."""
    out_dir = Path(out_dir)
    out_files = []
    warnings = []
    for metrics_path in sorted(out_dir.rglob("metrics.csv")):
        _plot_metrics(metrics_path, out_files, warnings)
    for alpha_path in sorted(out_dir.rglob("alpha.csv")):
        _plot_alpha(alpha_path, out_files, warnings)
    results_path = out_dir / "results.csv"
    if results_path.exists():
        _plot_scatter(results_path, out_files, warnings)
    else:
        warnings.append(f"{results_path}: missing, scatter skipped")
    return {"files": out_files, "warnings": warnings}
