"""Shared builders and independent oracles for the test suite.

The oracles here deliberately avoid the package's own helpers: base-3 digits
come from ``numpy.base_repr``, metrics are written as plain loops and the
interpolation oracle recomputes the fill from the masked day's raw fields.
"""

from __future__ import annotations

import math
from datetime import date
from pathlib import Path

import numpy as np

from loadpatch.ingestion import DailyProfile
from loadpatch.preprocess import MaskSpec, NormalizationParams, apply_mask, quantize

FIXTURES = Path(__file__).parent / "fixtures"

# kW and °F ranges of the hand-built golden day.
GOLDEN_PARAMS = NormalizationParams(210.0, 1751.0, 60.0, 100.0)


def ternary_oracle(q: int) -> str:
    return np.base_repr(q, 3).zfill(5).translate(str.maketrans("012", "LMH"))


def golden_day(start: int = 40, user: str = "user0", day: date = date(2018, 7, 1)):
    """A deterministic masked day whose numbers are easy to read."""
    slots = np.arange(96)
    load = 600 + 400 * np.sin(np.pi * slots / 96) ** 2 + 15 * (slots % 4)
    temp = 75 + 15 * np.sin(np.pi * (slots - 24) / 96)
    profile = DailyProfile(user, day, tuple(float(x) for x in load), tuple(float(x) for x in temp))
    return apply_mask(quantize(profile, GOLDEN_PARAMS), MaskSpec(start), GOLDEN_PARAMS)


# -- brute-force metrics ---------------------------------------------------------

def oracle_mpe(truth, restored):
    total = 0.0
    for t, r in zip(truth, restored):
        total += abs(t - r) / abs(t)
    return total / len(truth)


def oracle_rmse(truth, restored):
    total = 0.0
    for t, r in zip(truth, restored):
        total += (t - r) * (t - r)
    return math.sqrt(total / len(truth))


def oracle_egye(truth, restored):
    return abs(sum(truth) - sum(restored)) / abs(sum(truth))


def close(a, b, rel=1e-12, abs_=0.0):
    return math.isclose(a, b, rel_tol=rel, abs_tol=abs_)


# -- linear-interpolation stub oracle --------------------------------------------

def interp_oracle(day, params):
    """Per-sample (mpe, rmse_kw, egye) of the interpolation stub, from scratch."""
    s = day.mask.start_index
    e = s + 16
    known = day.base.load_q
    left = known[s - 1] if s > 0 else None
    right = known[e] if e < 96 else None
    if left is None:
        left = right
    if right is None:
        right = left
    restored_kw = []
    for i in range(s, e):
        x = left + (right - left) * (i - (s - 1)) / 17
        q = math.floor(x + 0.5)
        restored_kw.append(params.load_min + q / 200 * (params.load_max - params.load_min))
    truth = list(day.truth_kw)
    return oracle_mpe(truth, restored_kw), oracle_rmse(truth, restored_kw), oracle_egye(truth, restored_kw)
