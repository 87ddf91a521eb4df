"""Figures written next to the text/CSV reports (PNG, Agg backend)."""

from __future__ import annotations

import re
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
    "savefig.bbox": "tight",
}
METRIC_COLORS = {"MPE": "#4c72b0", "RMSE": "#dd8452", "EGYE": "#55a868"}


def _safe_name(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", text).strip("_") or "experiment"


def metric_bars(rows, path, title: str = "") -> Path:
    """Grouped MPE/RMSE/EGYE bars (percent) for completed rows."""
    rows = [r for r in rows if r.get("metrics")]
    labels = [r["label"] for r in rows]
    series = {
        "MPE": [100 * r["metrics"]["mpe"] for r in rows],
        "RMSE": [100 * r["metrics"]["rmse_norm"] for r in rows],
        "EGYE": [100 * r["metrics"]["egye"] for r in rows],
    }
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(4.0, 0.9 * len(rows) + 1.5), 3.2))
        width = 0.26
        for k, (name, vals) in enumerate(series.items()):
            xs = [i + (k - 1) * width for i in range(len(rows))]
            ax.bar(xs, vals, width, label=name, color=METRIC_COLORS[name])
        ax.set_xticks(range(len(rows)))
        ax.set_xticklabels(labels, rotation=30, ha="right")
        ax.set_ylabel("error (%)")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False, ncol=3)
        fig.savefig(path)
        plt.close(fig)
    return Path(path)


def restoration_examples(records, path, n: int = 4, title: str = "") -> Path:
    """Daily profiles with the restored window drawn over the ground truth."""
    ok = [r for r in records if r.get("status") == "ok" and r.get("profile_kw")][:n]
    if not ok:
        raise ValueError("no successful restorations to plot")
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(len(ok), 1, figsize=(6.0, 1.9 * len(ok)), squeeze=False)
        for ax, rec in zip(axes[:, 0], ok):
            start = rec["mask_start"]
            stop = start + len(rec["truth_kw"])
            truth = list(rec["profile_kw"])
            truth[start:stop] = rec["truth_kw"]
            hours = [i / 4 for i in range(len(truth))]
            ax.axvspan(start / 4, (stop - 1) / 4, color="0.9", lw=0)
            ax.plot(hours, truth, color="k", lw=1.0, label="ground truth")
            ax.plot(hours[start:stop], rec["restored_kw"], color="tab:red", lw=1.4, label="restored")
            ax.set_ylabel("kW")
            ax.set_title(f"{rec['user_id']}  {rec['date']}", loc="left")
        axes[-1, 0].set_xlabel("hour of day")
        axes[0, 0].legend(frameon=False, loc="upper left")
        if title:
            fig.suptitle(title)
        fig.savefig(path)
        plt.close(fig)
    return Path(path)


def cost_curve(curve, path) -> Path:
    """Trained tokens and cost against number of fine-tuning samples."""
    ns = [c[0] for c in curve]
    with plt.rc_context(STYLE):
        fig, (a, b) = plt.subplots(1, 2, figsize=(7.0, 2.8))
        a.plot(ns, [c[1] / 1e6 for c in curve], "o-", color="#4c72b0")
        a.set_xlabel("samples")
        a.set_ylabel("tokens trained (M)")
        b.plot(ns, [c[2] for c in curve], "o-", color="#dd8452")
        b.set_xlabel("samples")
        b.set_ylabel("cost ($)")
        for ax in (a, b):
            ax.set_xticks(ns)
        fig.savefig(path)
        plt.close(fig)
    return Path(path)


def report_figures(rows, out_dir, results_root=None) -> list[Path]:
    """One metrics chart per experiment, plus restoration examples where
    per-sample results files can be found under ``results_root``."""
    from .orchestrator import read_results
    from .reporting import group_rows, latest_rows

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for experiment, group in group_rows(latest_rows(rows)).items():
        if any(r.get("metrics") for r in group):
            written.append(metric_bars(group, out_dir / f"metrics_{_safe_name(experiment)}.png",
                                       title=experiment))
        if results_root is None:
            continue
        for row in group:
            rel = row.get("results")
            if not rel or row.get("status") != "completed":
                continue
            path = Path(results_root) / rel
            if not path.exists():
                continue
            _, records = read_results(path)
            try:
                written.append(restoration_examples(
                    records, out_dir / f"restored_{_safe_name(row['label'])}.png", title=row["label"]))
            except ValueError:
                pass
    return written
