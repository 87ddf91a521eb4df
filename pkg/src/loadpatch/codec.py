"""Ternary word codec.

Quantized values (integers 0..200) are written as five base-3 digits,
most significant first, with the digits 0/1/2 spelled ``L``/``M``/``H``.
A missing load value is spelled ``OOOOO``. Missing values are represented
in Python as ``None`` (``MISSING``).
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence

from .errors import CodecError, RangeError

MISSING = None
QMAX = 200
WORD_LEN = 5
WORD_MAX = 3**WORD_LEN - 1  # 242
SENTINEL = "O" * WORD_LEN

_DIGITS = "LMH"
_VALUE = {c: i for i, c in enumerate(_DIGITS)}


def _check_q(q) -> int:
    if isinstance(q, bool) or not hasattr(q, "__index__"):
        raise RangeError(f"quantized value must be an integer, got {q!r}")
    q = int(q)
    if not 0 <= q <= QMAX:
        raise RangeError(f"quantized value {q} outside [0, {QMAX}]")
    return q


def encode(q: int | None) -> str:
    if q is MISSING:
        return SENTINEL
    q = _check_q(q)
    chars = []
    for _ in range(WORD_LEN):
        q, digit = divmod(q, 3)
        chars.append(_DIGITS[digit])
    return "".join(reversed(chars))


def decode(word: str) -> int | None:
    """Inverse of :func:`encode`.

    Legal words decode to 0..242; values above 200 are syntactically valid
    but outside the quantization range (see :func:`out_of_model_range`).
    """
    if not isinstance(word, str):
        raise CodecError("word must be a string", word=repr(word))
    if len(word) != WORD_LEN:
        raise CodecError(f"word must have {WORD_LEN} characters, got {len(word)}", word=word)
    if word == SENTINEL:
        return MISSING
    value = 0
    for pos, ch in enumerate(word):
        digit = _VALUE.get(ch)
        if digit is None:
            raise CodecError(f"illegal character {ch!r}", word=word, position=pos)
        value = value * 3 + digit
    return value


def out_of_model_range(value: int | None) -> bool:
    return value is not None and value > QMAX


def encode_combined(load_q: int | None, temp_q: int) -> str:
    if temp_q is MISSING:
        raise RangeError("temperature value cannot be missing")
    return encode(load_q) + encode(temp_q)


def split_combined(word: str) -> tuple[int | None, int]:
    if not isinstance(word, str) or len(word) != 2 * WORD_LEN:
        raise CodecError(f"combined word must have {2 * WORD_LEN} characters", word=str(word))
    load = decode(word[:WORD_LEN])
    try:
        temp = decode(word[WORD_LEN:])
    except CodecError as exc:
        pos = None if exc.position is None else exc.position + WORD_LEN
        raise CodecError("illegal temperature half", word=word, position=pos) from None
    if temp is MISSING:
        raise CodecError("temperature half cannot be the missing sentinel", word=word)
    return load, temp


def encode_series(values: Iterable[int | None]) -> str:
    return " ".join(encode(v) for v in values)


def encode_combined_series(load: Sequence[int | None], temp: Sequence[int]) -> str:
    if len(load) != len(temp):
        raise RangeError(f"load/temperature length mismatch: {len(load)} vs {len(temp)}")
    return " ".join(encode_combined(a, b) for a, b in zip(load, temp))


def decode_series(text: str) -> list[int | None]:
    out = []
    for i, token in enumerate(text.split()):
        try:
            out.append(decode(token))
        except CodecError as exc:
            raise CodecError(exc.reason, word=token,
                             position=exc.position, index=i) from None
    return out


def decode_combined_series(text: str) -> tuple[list[int | None], list[int]]:
    load, temp = [], []
    for i, token in enumerate(text.split()):
        try:
            a, b = split_combined(token)
        except CodecError as exc:
            raise CodecError("malformed combined word", word=token,
                             position=exc.position, index=i) from None
        load.append(a)
        temp.append(b)
    return load, temp
