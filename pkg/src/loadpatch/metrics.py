"""Window error metrics and their aggregation.

All metrics are fractions (``0.02221`` prints as ``2.221`` percent).
``rmse_norm`` is the kW RMSE divided by the annual load span.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyReportError, ShapeError, UndefinedMetricError


@dataclass(frozen=True)
class SampleMetrics:
    mpe: float
    rmse_kw: float
    rmse_norm: float
    egye: float
    k: int

    def to_dict(self) -> dict:
        return {"mpe": self.mpe, "rmse_kw": self.rmse_kw, "rmse_norm": self.rmse_norm,
                "egye": self.egye, "k": self.k}


@dataclass(frozen=True)
class MetricsReport:
    label: str
    samples: tuple[SampleMetrics, ...]
    mpe: float
    rmse_kw: float
    rmse_norm: float
    egye: float
    n_failed: int = 0
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def n_ok(self) -> int:
        return len(self.samples)

    def means(self) -> dict:
        return {"mpe": self.mpe, "rmse_kw": self.rmse_kw,
                "rmse_norm": self.rmse_norm, "egye": self.egye}


def _pair(truth, restored):
    t = np.asarray(truth, dtype=float)
    r = np.asarray(restored, dtype=float)
    if t.shape != r.shape or t.ndim != 1:
        raise ShapeError(f"shape mismatch: truth {t.shape} vs restored {r.shape}")
    if t.size == 0:
        raise ShapeError("empty window")
    return t, r


def mpe(truth, restored) -> float:
    t, r = _pair(truth, restored)
    if np.any(t <= 0):
        raise UndefinedMetricError("MPE is undefined when a truth value is <= 0")
    return float(np.mean(np.abs(r - t) / t))


def rmse(truth, restored) -> float:
    t, r = _pair(truth, restored)
    return float(np.sqrt(np.mean((r - t) ** 2)))


def egye(truth, restored) -> float:
    t, r = _pair(truth, restored)
    total = t.sum()
    if total <= 0:
        raise UndefinedMetricError("EGYE is undefined when the truth window sums to <= 0")
    return float(abs(r.sum() - total) / total)


def sample_metrics(truth, restored, load_span: float) -> SampleMetrics:
    if not load_span > 0:
        raise ValueError("load_span must be positive")
    r = rmse(truth, restored)
    return SampleMetrics(mpe(truth, restored), r, r / load_span, egye(truth, restored), len(truth))


def aggregate(samples, label: str = "", n_failed: int = 0) -> MetricsReport:
    samples = tuple(samples)
    if not samples:
        raise EmptyReportError(f"{label or 'report'}: no successful samples ({n_failed} failed)")
    n = len(samples)
    return MetricsReport(
        label=label,
        samples=samples,
        mpe=math.fsum(s.mpe for s in samples) / n,
        rmse_kw=math.fsum(s.rmse_kw for s in samples) / n,
        rmse_norm=math.fsum(s.rmse_norm for s in samples) / n,
        egye=math.fsum(s.egye for s in samples) / n,
        n_failed=n_failed,
    )


def format_percent(fraction: float | None) -> str:
    if fraction is None:
        return "-"
    return f"{100 * fraction:.3f}"
