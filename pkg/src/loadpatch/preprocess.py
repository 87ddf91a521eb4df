"""Normalization, quantization to 0..200, masking and abnormal-day filtering."""

from __future__ import annotations

import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date, timedelta

import numpy as np

from .codec import MISSING, QMAX
from .errors import DatasetReadError, DegenerateRangeError, RangeError
from .ingestion import POINTS_PER_DAY, DailyProfile, DatasetStats, summarize
from .seeding import derive_seed

logger = logging.getLogger(__name__)

MASK_LEN = 16
MAX_START = POINTS_PER_DAY - MASK_LEN  # 80
DEFAULT_ABNORMAL_THRESHOLD = 0.25
PREPARED_SCHEMA = "loadpatch.prepared"
PREPARED_VERSION = 1


@dataclass(frozen=True)
class NormalizationParams:
    load_min: float
    load_max: float
    temp_min: float
    temp_max: float

    def __post_init__(self):
        if not self.load_max > self.load_min:
            raise DegenerateRangeError(
                f"load range is degenerate: [{self.load_min}, {self.load_max}]")
        if not self.temp_max > self.temp_min:
            raise DegenerateRangeError(
                f"temperature range is degenerate: [{self.temp_min}, {self.temp_max}]")

    @property
    def load_span(self) -> float:
        return self.load_max - self.load_min

    def to_dict(self) -> dict:
        return {"load_min": self.load_min, "load_max": self.load_max,
                "temp_min": self.temp_min, "temp_max": self.temp_max}


@dataclass(frozen=True)
class QuantizedDay:
    user_id: str
    date: date
    load_q: tuple[int | None, ...]
    temp_q: tuple[int, ...]


@dataclass(frozen=True)
class MaskSpec:
    start_index: int
    length: int = MASK_LEN

    def __post_init__(self):
        if self.length != MASK_LEN:
            raise RangeError(f"mask length must be {MASK_LEN}, got {self.length}")
        if not 0 <= self.start_index <= MAX_START:
            raise RangeError(f"mask start {self.start_index} outside [0, {MAX_START}]")

    @property
    def stop(self) -> int:
        return self.start_index + self.length

    def positions(self) -> range:
        return range(self.start_index, self.stop)


@dataclass(frozen=True)
class MaskedDay:
    """A quantized day whose load window ``mask`` has been blanked out.

    ``base.load_q`` holds ``None`` at the masked positions; the held-out
    values live in ``truth_q`` and ``truth_kw`` (the latter is the kW value
    at model resolution, i.e. ``dequantize(truth_q)``).
    """

    base: QuantizedDay
    mask: MaskSpec
    truth_q: tuple[int, ...]
    truth_kw: tuple[float, ...]
    raw_truth_kw: tuple[float, ...] = field(default=(), compare=False)

    @property
    def user_id(self) -> str:
        return self.base.user_id

    @property
    def date(self) -> date:
        return self.base.date

    @property
    def key(self) -> str:
        return day_key(self.user_id, self.date, self.mask.start_index)

    def full_load_q(self) -> list[int]:
        """Load with the held-out window put back."""
        out = list(self.base.load_q)
        out[self.mask.start_index:self.mask.stop] = self.truth_q
        return out


def day_key(user_id: str, day: date | str, start: int) -> str:
    day = day.isoformat() if isinstance(day, date) else day
    return f"{user_id}/{day}/{start}"


def fit_normalization(stats: DatasetStats) -> NormalizationParams:
    return NormalizationParams(stats.load_min, stats.load_max, stats.temp_min, stats.temp_max)


def _quantize_values(values, lo: float, hi: float, what: str) -> tuple[int, ...]:
    x = np.asarray(values, dtype=float)
    clipped = np.clip(x, lo, hi)
    n_out = int(np.count_nonzero(clipped != x))
    if n_out:
        logger.warning("%d %s value(s) outside [%g, %g] clamped", n_out, what, lo, hi)
    scaled = QMAX * (clipped - lo) / (hi - lo)
    # round half away from zero; scaled is never negative here
    q = np.floor(scaled + 0.5).astype(int)
    return tuple(int(v) for v in np.clip(q, 0, QMAX))


def quantize_load(values, p: NormalizationParams) -> tuple[int, ...]:
    return _quantize_values(values, p.load_min, p.load_max, "load")


def quantize_temperature(values, p: NormalizationParams) -> tuple[int, ...]:
    return _quantize_values(values, p.temp_min, p.temp_max, "temperature")


def quantize(day: DailyProfile, p: NormalizationParams) -> QuantizedDay:
    return QuantizedDay(day.user_id, day.date, quantize_load(day.load, p),
                        quantize_temperature(day.temperature, p))


def dequantize(q: int, p: NormalizationParams) -> float:
    if isinstance(q, bool) or not hasattr(q, "__index__") or not 0 <= q <= QMAX:
        raise RangeError(f"quantized value {q!r} outside [0, {QMAX}]")
    return p.load_min + (int(q) / QMAX) * p.load_span


def dequantize_many(qs, p: NormalizationParams) -> tuple[float, ...]:
    return tuple(dequantize(q, p) for q in qs)


def apply_mask(day: QuantizedDay, mask: MaskSpec, p: NormalizationParams,
               raw_load=None) -> MaskedDay:
    if not isinstance(mask, MaskSpec):
        raise RangeError(f"invalid mask {mask!r}")
    truth = tuple(day.load_q[mask.start_index:mask.stop])
    if any(v is MISSING for v in truth):
        raise RangeError(f"{day.user_id} {day.date}: day is already masked")
    load = list(day.load_q)
    for i in mask.positions():
        load[i] = MISSING
    raw = () if raw_load is None else tuple(float(v) for v in raw_load[mask.start_index:mask.stop])
    return MaskedDay(
        base=QuantizedDay(day.user_id, day.date, tuple(load), day.temp_q),
        mask=mask,
        truth_q=truth,
        truth_kw=dequantize_many(truth, p),
        raw_truth_kw=raw,
    )


def sample_masks(days, seed: int, p: NormalizationParams) -> list[MaskedDay]:
    """Mask each day once, with start drawn uniformly from [0, 80].

    ``days`` may hold :class:`DailyProfile` or :class:`QuantizedDay` items.
    """
    rng = np.random.default_rng(seed)
    starts = rng.integers(0, MAX_START + 1, size=len(days))
    out = []
    for day, start in zip(days, starts):
        raw = None
        if isinstance(day, DailyProfile):
            raw = day.load
            day = quantize(day, p)
        out.append(apply_mask(day, MaskSpec(int(start)), p, raw_load=raw))
    return out


def filter_abnormal_days(days: list[DailyProfile], threshold_frac: float = DEFAULT_ABNORMAL_THRESHOLD,
                         temp_range: float | None = None):
    """Split days into (kept, removed) by the previous-day peak-drop rule.

    A day is abnormal when its peak temperature sits more than
    ``threshold_frac * temp_range`` below the peak of the previous calendar
    day of the same user. ``temp_range`` defaults to the span of all
    temperatures in ``days``. Input order is preserved in both outputs.
    """
    if not 0 < threshold_frac <= 1:
        raise RangeError(f"threshold_frac must be in (0, 1], got {threshold_frac}")
    if temp_range is None:
        if days:
            temps = np.array([d.temperature for d in days])
            temp_range = float(temps.max() - temps.min())
        else:
            temp_range = 0.0
    limit = threshold_frac * temp_range

    peaks: dict[str, dict[date, float]] = defaultdict(dict)
    for d in days:
        peaks[d.user_id][d.date] = d.peak_temperature

    kept, removed = [], []
    for d in days:
        prev = peaks[d.user_id].get(d.date - timedelta(days=1))
        if prev is not None and prev - d.peak_temperature > limit:
            removed.append(d)
        else:
            kept.append(d)
    return kept, removed


@dataclass
class PreparedDataset:
    params: NormalizationParams
    seed: int
    abnormal_threshold: float
    days: list[MaskedDay]
    abnormal: set[str] = field(default_factory=set)  # day keys

    def users(self) -> list[str]:
        return natural_sorted({d.user_id for d in self.days})

    def for_user(self, user_id: str) -> list[MaskedDay]:
        return [d for d in self.days if d.user_id == user_id]

    def is_abnormal(self, day: MaskedDay) -> bool:
        return day.key in self.abnormal

    def by_key(self) -> dict[str, MaskedDay]:
        return {d.key: d for d in self.days}


def natural_sorted(items):
    def key(s):
        head = s.rstrip("0123456789")
        tail = s[len(head):]
        return (head, int(tail) if tail else -1, s)
    return sorted(items, key=key)


def prepare(days: list[DailyProfile], seed: int, mask_seed: int | None = None,
            abnormal_threshold: float = DEFAULT_ABNORMAL_THRESHOLD,
            params: NormalizationParams | None = None) -> PreparedDataset:
    """Quantize and mask every day; flag abnormal ones without dropping them.

    Mask placement uses the ``"mask"`` sub-seed of ``seed`` unless
    ``mask_seed`` is given.
    """
    days = sorted(days, key=lambda d: (d.user_id, d.date))
    if params is None:
        params = fit_normalization(summarize(days))
    _, removed = filter_abnormal_days(days, abnormal_threshold,
                                      temp_range=params.temp_max - params.temp_min)
    if mask_seed is None:
        mask_seed = derive_seed(seed, "mask")
    masked = sample_masks(days, mask_seed, params)
    removed_ids = {(d.user_id, d.date) for d in removed}
    abnormal = {m.key for m in masked if (m.user_id, m.date) in removed_ids}
    return PreparedDataset(params, seed, abnormal_threshold, masked, abnormal)


def _masked_to_record(d: MaskedDay, abnormal: bool) -> dict:
    return {
        "user_id": d.user_id,
        "date": d.date.isoformat(),
        "mask_start": d.mask.start_index,
        "load_q": list(d.base.load_q),
        "temp_q": list(d.base.temp_q),
        "truth_q": list(d.truth_q),
        "truth_kw": list(d.truth_kw),
        "raw_truth_kw": list(d.raw_truth_kw),
        "abnormal": abnormal,
    }


def _masked_from_record(rec: dict) -> MaskedDay:
    base = QuantizedDay(rec["user_id"], date.fromisoformat(rec["date"]),
                        tuple(rec["load_q"]), tuple(rec["temp_q"]))
    if len(base.load_q) != POINTS_PER_DAY or len(base.temp_q) != POINTS_PER_DAY:
        raise ValueError("expected 96 load and temperature values")
    return MaskedDay(base, MaskSpec(rec["mask_start"]), tuple(rec["truth_q"]),
                     tuple(rec["truth_kw"]), tuple(rec.get("raw_truth_kw", ())))


def write_prepared(ds: PreparedDataset, path) -> None:
    header = {"schema": PREPARED_SCHEMA, "version": PREPARED_VERSION,
              "params": ds.params.to_dict(), "seed": ds.seed,
              "mask_len": MASK_LEN, "abnormal_threshold": ds.abnormal_threshold}
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for d in ds.days:
            fh.write(json.dumps(_masked_to_record(d, d.key in ds.abnormal)) + "\n")


def read_prepared(path) -> PreparedDataset:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DatasetReadError(f"{path}: empty file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError:
        raise DatasetReadError("unreadable header", line=1) from None
    if header.get("schema") != PREPARED_SCHEMA or header.get("version") != PREPARED_VERSION:
        raise DatasetReadError(
            f"not a prepared file (schema={header.get('schema')!r}, "
            f"version={header.get('version')!r})", line=1)
    params = NormalizationParams(**header["params"])
    days, abnormal = [], set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            d = _masked_from_record(rec)
        except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
            raise DatasetReadError(f"bad record: {exc}", line=lineno) from None
        days.append(d)
        if rec.get("abnormal"):
            abnormal.add(d.key)
    return PreparedDataset(params, header["seed"], header["abnormal_threshold"], days, abnormal)

