"""Chat-format fine-tuning samples and their JSONL serialization.

Two conversation layouts are supported. The combined layout sends one
sequence of ten-letter words (load word followed by temperature word):

    user: instruction / assistant: "What's the encoded data?" /
    user: <96 words> / assistant: <completion>

The separate layout sends load and temperature in their own turns
(six messages). In both, the completion is the complete 96-value load
profile with the held-out window filled in. With ``discard_encoding`` the
ternary words are replaced by plain integers 0..200 and a missing load value
is written as ``0``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from . import codec
from .errors import DatasetReadError, DatasetValidationError, PreconditionError
from .preprocess import MaskedDay, day_key

USER = "user"
ASSISTANT = "assistant"

ASK_COMBINED = "What's the encoded data?"
ASK_LOAD = "What's the encoded load profile?"
ASK_TEMPERATURE = "What's the encoded temperature?"

_TASK = ("Given a load profile with missing segments and a complete daily temperature "
         "profile, estimate the missing portions of the load profile.")

INSTRUCTIONS = {
    # (advanced, separate, discard_encoding)
    (True, False, False): (
        f"{_TASK} The load and temperature data are provided jointly. Each value for load "
        "and temperature is encoded as a ten-digit word in ternary format. The first and "
        "last five digits represent load and temperature, respectively. Missing load values "
        "are represented by OOOOO. Please provide the estimated load profile in the same "
        "format and length."),
    (True, True, False): (
        f"{_TASK} The load and temperature data are provided separately and exhibit a "
        "correlation. Each value for load or temperature is encoded as a five-digit word in "
        "ternary format."),
    (True, False, True): (
        f"{_TASK} The load and temperature data are provided jointly. Each value for load "
        "and temperature is given as a pair of integers between 0 and 200 joined by a comma. "
        "The first and second integers represent load and temperature, respectively. Missing "
        "load values are represented by 0. Please provide the estimated load profile in the "
        "same format and length."),
    (True, True, True): (
        f"{_TASK} The load and temperature data are provided separately and exhibit a "
        "correlation. Each value for load or temperature is given as integers between 0 "
        "and 200."),
}
TERSE_INSTRUCTION = "Estimate the missing values in this load profile and output the complete profile."


@dataclass(frozen=True)
class PromptVariant:
    advanced: bool = False
    separate_load_temp: bool = False
    discard_encoding: bool = False

    @property
    def name(self) -> str:
        flags = [n for n, on in (("advanced", self.advanced),
                                 ("separate", self.separate_load_temp),
                                 ("discard", self.discard_encoding)) if on]
        return ",".join(flags) or "none"

    @classmethod
    def parse(cls, text: str) -> "PromptVariant":
        """Parse ``"advanced,separate,discard"``-style flag lists (``"none"`` for all off)."""
        names = {t.strip() for t in text.split(",") if t.strip()} - {"none"}
        unknown = names - {"advanced", "separate", "discard"}
        if unknown:
            raise ValueError(f"unknown variant flag(s): {', '.join(sorted(unknown))}")
        return cls("advanced" in names, "separate" in names, "discard" in names)

    def instruction(self) -> str:
        if not self.advanced:
            return TERSE_INSTRUCTION
        return INSTRUCTIONS[(True, self.separate_load_temp, self.discard_encoding)]

    @property
    def n_training_messages(self) -> int:
        return 6 if self.separate_load_temp else 4


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in (USER, ASSISTANT):
            raise ValueError(f"unsupported role {self.role!r}")
        if not self.content:
            raise ValueError("message content must be non-empty")


@dataclass(frozen=True)
class DayRef:
    user_id: str
    date: str
    mask_start: int

    @property
    def key(self) -> str:
        return day_key(self.user_id, self.date, self.mask_start)

    @classmethod
    def of(cls, day: MaskedDay) -> "DayRef":
        return cls(day.user_id, day.date.isoformat(), day.mask.start_index)


@dataclass(frozen=True)
class ChatSample:
    messages: tuple[ChatMessage, ...]
    variant: PromptVariant = field(default_factory=PromptVariant)
    day_ref: DayRef | None = None

    @property
    def is_training(self) -> bool:
        return bool(self.messages) and self.messages[-1].role == ASSISTANT

    def without_completion(self) -> "ChatSample":
        if not self.is_training:
            raise PreconditionError("sample has no completion to strip")
        return ChatSample(self.messages[:-1], self.variant, self.day_ref)

    @property
    def completion(self) -> str:
        if not self.is_training:
            raise PreconditionError("test prompts carry no completion")
        return self.messages[-1].content


# -- rendering -----------------------------------------------------------------

def render_integers(values) -> str:
    return " ".join("0" if v is codec.MISSING else str(int(v)) for v in values)


def render_load(values, variant: PromptVariant) -> str:
    if variant.discard_encoding:
        return render_integers(values)
    return codec.encode_series(values)


def render_temperature(values, variant: PromptVariant) -> str:
    return render_load(values, variant)


def render_combined(load, temp, variant: PromptVariant) -> str:
    if variant.discard_encoding:
        return " ".join(f"{0 if a is codec.MISSING else int(a)},{int(b)}" for a, b in zip(load, temp))
    return codec.encode_combined_series(load, temp)


def _messages(day: MaskedDay, v: PromptVariant) -> list[ChatMessage]:
    load, temp = day.base.load_q, day.base.temp_q
    msgs = [ChatMessage(USER, v.instruction())]
    if v.separate_load_temp:
        msgs += [ChatMessage(ASSISTANT, ASK_LOAD),
                 ChatMessage(USER, render_load(load, v)),
                 ChatMessage(ASSISTANT, ASK_TEMPERATURE),
                 ChatMessage(USER, render_temperature(temp, v))]
    else:
        msgs += [ChatMessage(ASSISTANT, ASK_COMBINED),
                 ChatMessage(USER, render_combined(load, temp, v))]
    return msgs


def completion_for(load_q, v: PromptVariant) -> str:
    """Render a complete 96-value load profile as a completion string."""
    return render_load(load_q, v)


def build_training_sample(day: MaskedDay, v: PromptVariant, p=None) -> ChatSample:
    # p is accepted for signature symmetry with the restorer; values are already quantized.
    msgs = _messages(day, v)
    msgs.append(ChatMessage(ASSISTANT, completion_for(day.full_load_q(), v)))
    return ChatSample(tuple(msgs), v, DayRef.of(day))


def build_test_prompt(day: MaskedDay, v: PromptVariant, p=None) -> ChatSample:
    return ChatSample(tuple(_messages(day, v)), v, DayRef.of(day))


def prompt_load_values(sample: ChatSample) -> list[int | None]:
    """Recover the (masked) load sequence a prompt carries.

    In integer form a ``0`` is returned as 0; callers that need to know the
    masked window must take it from the day reference.
    """
    v = sample.variant
    if v.separate_load_temp:
        text = sample.messages[2].content
        if v.discard_encoding:
            return [int(t) for t in text.split()]
        return codec.decode_series(text)
    text = sample.messages[2].content
    if v.discard_encoding:
        return [int(t.split(",")[0]) for t in text.split()]
    return codec.decode_combined_series(text)[0]


# -- validation ----------------------------------------------------------------

def check_shape(sample: ChatSample) -> None:
    """Raise DatasetValidationError unless roles alternate starting with user."""
    msgs = sample.messages
    if not msgs:
        raise DatasetValidationError("sample has no messages")
    for i, m in enumerate(msgs):
        expected = USER if i % 2 == 0 else ASSISTANT
        if m.role != expected:
            raise DatasetValidationError(f"message {i} has role {m.role!r}, expected {expected!r}")


def validate_finetune_samples(samples) -> None:
    if not samples:
        raise DatasetValidationError("fine-tuning dataset is empty")
    for i, s in enumerate(samples):
        try:
            check_shape(s)
        except DatasetValidationError as exc:
            raise DatasetValidationError(f"sample {i}: {exc}") from None
        if not s.is_training:
            raise DatasetValidationError(f"sample {i} ends with a user message (test-shaped)")


# -- serialization -------------------------------------------------------------

def sample_to_dict(sample: ChatSample, with_meta: bool = True) -> dict:
    obj = {"messages": [{"role": m.role, "content": m.content} for m in sample.messages]}
    if with_meta:
        meta = {"variant": sample.variant.name}
        if sample.day_ref is not None:
            meta["user_id"] = sample.day_ref.user_id
            meta["date"] = sample.day_ref.date
            meta["mask_start"] = sample.day_ref.mask_start
        obj["meta"] = meta
    return obj


def sample_from_dict(obj: dict) -> ChatSample:
    msgs = obj["messages"]
    if not isinstance(msgs, list):
        raise TypeError("'messages' must be a list")
    messages = tuple(ChatMessage(m["role"], m["content"]) for m in msgs)
    meta = obj.get("meta") or {}
    variant = PromptVariant.parse(meta.get("variant", "none"))
    ref = None
    if "user_id" in meta:
        ref = DayRef(meta["user_id"], meta["date"], int(meta["mask_start"]))
    return ChatSample(messages, variant, ref)


def dumps_sample(sample: ChatSample, with_meta: bool = True) -> str:
    return json.dumps(sample_to_dict(sample, with_meta), ensure_ascii=False, separators=(", ", ": "))


def write_dataset(samples, path, with_meta: bool = True) -> Path:
    """Write one JSON object per line.

    All samples must share a shape: either all end with the assistant
    completion (fine-tuning file) or none do (test prompts). ``with_meta``
    adds a ``meta`` object carrying the variant and day reference; uploads
    to a provider strip it.
    """
    samples = list(samples)
    if not samples:
        raise DatasetValidationError("refusing to write an empty dataset")
    shapes = {s.is_training for s in samples}
    if len(shapes) > 1:
        raise DatasetValidationError("dataset mixes training samples and test prompts")
    for i, s in enumerate(samples):
        try:
            check_shape(s)
        except DatasetValidationError as exc:
            raise DatasetValidationError(f"sample {i}: {exc}") from None
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(dumps_sample(s, with_meta) + "\n")
    return path


def read_dataset(path) -> list[ChatSample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetReadError(f"invalid JSON: {exc.msg}", line=lineno) from None
            if not isinstance(obj, dict) or "messages" not in obj:
                raise DatasetReadError("missing 'messages' array", line=lineno)
            try:
                out.append(sample_from_dict(obj))
            except (KeyError, TypeError, ValueError) as exc:
                raise DatasetReadError(f"bad sample: {exc}", line=lineno) from None
    return out
