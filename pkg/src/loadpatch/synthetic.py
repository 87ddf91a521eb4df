"""Synthetic summer meter/temperature CSVs for tests and demos.

Loads follow a daily shape plus a temperature response, so the files look
like what ``ingest`` expects from real meters: one ``user<i>.csv`` per meter
at 15-minute cadence and an hourly ``temperature.csv``.
"""

from __future__ import annotations

from datetime import date, datetime, timedelta
from pathlib import Path

import numpy as np


def _temperature(rng, hours: int, n_days: int, cold_snaps: int) -> np.ndarray:
    h = np.arange(hours)
    daily_mean = 82 + 4 * np.sin(np.linspace(0, np.pi, n_days + 1)) + rng.normal(0, 1.5, n_days + 1)
    snap_days = rng.choice(np.arange(5, n_days - 2), size=cold_snaps, replace=False)
    daily_mean[snap_days] -= 14
    mean = np.repeat(daily_mean, 24)[:hours]
    diurnal = 9 * np.sin(2 * np.pi * (h % 24 - 9) / 24)
    return np.round(mean + diurnal + rng.normal(0, 0.6, hours), 1)


def generate(out_dir, n_users: int = 11, start: date = date(2018, 6, 1), n_days: int = 92,
             seed: int = 0, cold_snaps: int = 3, drop_readings: dict | None = None) -> dict:
    """Write the CSVs and return ``{"load": [paths], "temperature": path}``.

    ``drop_readings`` maps a user index to day offsets that lose one reading,
    so those days are incomplete after ingestion. Defaults to one day of
    user 3.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    if drop_readings is None:
        drop_readings = {3: [40]} if n_users > 3 else {}

    hours = 24 * (n_days + 1)
    temp = _temperature(rng, hours, n_days, cold_snaps)
    t0 = datetime(start.year, start.month, start.day)
    temp_path = out / "temperature.csv"
    with temp_path.open("w") as fh:
        fh.write("timestamp,temperature_f\n")
        for i in range(hours):
            fh.write(f"{(t0 + timedelta(hours=i)).isoformat()},{temp[i]}\n")

    n = 96 * n_days
    slot = np.arange(n) % 96
    temp_q = np.interp(np.arange(n) / 4, np.arange(hours), temp)
    morning = np.exp(-0.5 * ((slot - 30) / 6) ** 2)
    evening = np.exp(-0.5 * ((slot - 72) / 8) ** 2)
    paths = []
    for u in range(n_users):
        base = rng.uniform(380, 520)
        beta = rng.uniform(18, 30)
        shape = base + rng.uniform(120, 220) * morning + rng.uniform(250, 420) * evening
        noise = np.convolve(rng.normal(0, 25, n), np.ones(4) / 4, mode="same")
        load = np.clip(shape + beta * np.maximum(temp_q - 72, 0) + noise, 210, None)
        dropped = {d * 96 + 37 for d in drop_readings.get(u, [])}
        path = out / f"user{u}.csv"
        with path.open("w") as fh:
            fh.write("timestamp,kw\n")
            for i in range(n):
                if i in dropped:
                    continue
                fh.write(f"{(t0 + timedelta(minutes=15 * i)).isoformat()},{load[i]:.2f}\n")
        paths.append(path)
    return {"load": paths, "temperature": temp_path}
