"""Render manifest rows as text tables and CSV."""

from __future__ import annotations

import csv
from pathlib import Path

from .metrics import format_percent
from .orchestrator import ScenarioConfig

HEADERS = ("label", "flags", "MPE%", "RMSE%", "EGYE%", "failed", "cost$")
CSV_FIELDS = ("experiment", "label", "model", "status", "flags", "n_train", "n_test", "n_failed",
              "mpe_pct", "rmse_pct", "rmse_kw", "egye_pct", "trained_tokens", "cost_usd", "error")
NO_EXPERIMENTS = "no experiments"


def _flags(row: dict) -> str:
    config = row.get("config")
    if not config:
        return "-"
    try:
        return ScenarioConfig(**config).flags()
    except TypeError:
        return "-"


def row_cells(row: dict) -> list[str]:
    m = row.get("metrics") or {}
    failed = row.get("n_failed")
    cost = row.get("cost")
    cells = [
        str(row.get("label", "")),
        _flags(row),
        format_percent(m.get("mpe")),
        format_percent(m.get("rmse_norm")),
        format_percent(m.get("egye")),
        "-" if failed is None else str(failed),
        "-" if cost is None else f"{cost:.2f}",
    ]
    if row.get("status") == "failed":
        cells[2:5] = ["FAILED", "-", "-"]
    return cells


def group_rows(rows) -> dict[str, list[dict]]:
    groups: dict[str, list[dict]] = {}
    for row in rows:
        groups.setdefault(row.get("experiment", ""), []).append(row)
    return groups


def latest_rows(rows) -> list[dict]:
    """Drop superseded rows: the last row per key wins, first-seen order kept."""
    latest: dict[str, dict] = {}
    order = []
    for i, row in enumerate(rows):
        key = row.get("key") or f"#{i}"
        if key not in latest:
            order.append(key)
        latest[key] = row
    return [latest[k] for k in order]


def render_table(rows) -> str:
    body = [list(HEADERS)] + [row_cells(r) for r in rows]
    widths = [max(len(line[i]) for line in body) for i in range(len(HEADERS))]
    out = []
    for n, line in enumerate(body):
        cells = [line[0].ljust(widths[0]), line[1].ljust(widths[1])]
        cells += [c.rjust(w) for c, w in zip(line[2:], widths[2:])]
        out.append("  ".join(cells).rstrip())
        if n == 0:
            out.append("  ".join("-" * w for w in widths))
    return "\n".join(out)


def render_report(rows) -> str:
    rows = latest_rows(rows)
    if not rows:
        return NO_EXPERIMENTS + "\n"
    parts = []
    for experiment, group in group_rows(rows).items():
        parts.append(f"== {experiment or 'experiment'} ==\n{render_table(group)}\n")
    return "\n".join(parts)


def write_delimited(rows, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_FIELDS)
        for row in latest_rows(rows):
            m = row.get("metrics") or {}
            pct = lambda k: "" if m.get(k) is None else format_percent(m[k])  # noqa: E731
            writer.writerow([
                row.get("experiment", ""), row.get("label", ""), row.get("model", ""),
                row.get("status", ""), _flags(row), row.get("n_train", ""), row.get("n_test", ""),
                row.get("n_failed", ""), pct("mpe"), pct("rmse_norm"),
                "" if m.get("rmse_kw") is None else f"{m['rmse_kw']:.3f}", pct("egye"),
                "" if row.get("trained_tokens") is None else row["trained_tokens"],
                "" if row.get("cost") is None else f"{row['cost']:.2f}",
                row.get("error") or "",
            ])
    return path
