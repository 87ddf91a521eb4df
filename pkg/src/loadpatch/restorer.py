"""Turn a model completion into a repaired 16-point restored segment.

Only the masked window is read from the completion; the known values
around it always come from the day itself. Repairs, in order:

* token count within 96 +/- 4: truncate, or right-pad with the last valid token
* unparseable or missing token inside the window: linear interpolation
  from the nearest valid neighbours (known context values count as neighbours)
* decoded value above 200: clamped to 200

More than 4 bad tokens in the window (over 25%), or a count further off
than 4, raises :class:`RestorationFailed`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import codec
from .errors import CodecError, RestorationFailed
from .ingestion import POINTS_PER_DAY
from .preprocess import MaskedDay, NormalizationParams, dequantize_many
from .promptset import DayRef, PromptVariant

LENGTH_SLACK = 4
MAX_INVALID_FRACTION = 0.25


@dataclass(frozen=True)
class RestorationResult:
    day_ref: DayRef
    restored_q: tuple[int, ...]
    restored_kw: tuple[float, ...]
    repairs: tuple[str, ...] = ()
    raw_completion: str = field(default="", repr=False)


def round_half_away(x):
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def fill_linear(values, targets) -> list[int]:
    """Fill ``targets`` positions of ``values`` by linear interpolation.

    Every other non-None position is a knot. Positions beyond the outermost
    knot take that knot's value. Results are rounded half away from zero and
    kept within 0..200.
    """
    targets = sorted(set(targets))
    tset = set(targets)
    xs = [i for i, v in enumerate(values) if i not in tset and v is not None]
    if not xs:
        raise ValueError("no known values to interpolate from")
    ys = [values[i] for i in xs]
    filled = round_half_away(np.interp(targets, xs, ys))
    out = list(values)
    for t, v in zip(targets, np.clip(filled, 0, codec.QMAX)):
        out[t] = int(v)
    return out


def _parse_token(token: str, v: PromptVariant, index: int, repairs: list) -> int | None:
    """Decoded value for one completion token; None when unusable."""
    if v.discard_encoding:
        if "," in token:
            token = token.split(",", 1)[0]
            repairs.append(f"pair-token:{index}")
        try:
            value = int(token)
        except ValueError:
            return None
        if value < 0:
            return None
        return value
    if len(token) == 2 * codec.WORD_LEN:
        token = token[:codec.WORD_LEN]
        repairs.append(f"combined-token:{index}")
    try:
        return codec.decode(token)
    except CodecError:
        return None


def _valid_token(token: str, v: PromptVariant) -> bool:
    value = _parse_token(token, v, -1, [])
    return value is not None


def extract_restored(completion: str, day: MaskedDay, v: PromptVariant,
                     p: NormalizationParams) -> RestorationResult:
    repairs: list[str] = []
    tokens = completion.split() if completion else []
    if v.discard_encoding and len(tokens) == 1 and "," in tokens[0]:
        tokens = tokens[0].split(",")
    n = len(tokens)
    diag = {"tokens": n, "key": day.key}
    if n == 0 or abs(n - POINTS_PER_DAY) > LENGTH_SLACK:
        raise RestorationFailed(
            f"{day.key}: completion has {n} tokens, expected {POINTS_PER_DAY}", diag)
    if n > POINTS_PER_DAY:
        tokens = tokens[:POINTS_PER_DAY]
        repairs.append(f"truncate:{n}")
    elif n < POINTS_PER_DAY:
        pad = next((t for t in reversed(tokens) if _valid_token(t, v)), None)
        if pad is None:
            raise RestorationFailed(f"{day.key}: no valid token to pad with", diag)
        tokens = tokens + [pad] * (POINTS_PER_DAY - n)
        repairs.append(f"pad:{n}")

    start, stop = day.mask.start_index, day.mask.stop
    window: list[int | None] = []
    bad = []
    for i in range(start, stop):
        value = _parse_token(tokens[i], v, i, repairs)
        if value is None:
            bad.append(i)
        elif value > codec.QMAX:
            repairs.append(f"clamp:{i}")
            value = codec.QMAX
        window.append(value)

    max_bad = int(MAX_INVALID_FRACTION * day.mask.length)
    if len(bad) > max_bad:
        diag["invalid_positions"] = bad
        raise RestorationFailed(
            f"{day.key}: {len(bad)} of {day.mask.length} window tokens unusable", diag)
    if bad:
        profile = list(day.base.load_q)
        profile[start:stop] = window
        profile = fill_linear(profile, bad)
        window = profile[start:stop]
        repairs.extend(f"interp:{i}" for i in bad)

    restored_q = tuple(int(x) for x in window)
    return RestorationResult(DayRef.of(day), restored_q, dequantize_many(restored_q, p),
                             tuple(repairs), completion)


def compose_profile(day: MaskedDay, restored_q, p: NormalizationParams) -> list[float]:
    """96-point kW profile: known values from the day, window from ``restored_q``."""
    q = list(day.base.load_q)
    q[day.mask.start_index:day.mask.stop] = restored_q
    return list(dequantize_many(q, p))
