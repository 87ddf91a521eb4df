"""Token estimates and fine-tuning cost."""

from __future__ import annotations

import math
from dataclasses import dataclass

DEFAULT_PRICE_PER_MILLION = 8.0
DEFAULT_EPOCHS = 3
DEFAULT_CHARS_PER_TOKEN = 3.5
FIGURE_SAMPLE_COUNTS = (128, 256, 512)


@dataclass(frozen=True)
class CostModel:
    price_per_million_tokens: float = DEFAULT_PRICE_PER_MILLION
    epochs: int = DEFAULT_EPOCHS
    counter: str = "approximate"  # or "provider"
    chars_per_token: float = DEFAULT_CHARS_PER_TOKEN

    def __post_init__(self):
        if not self.price_per_million_tokens > 0:
            raise ValueError("price must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.counter not in ("approximate", "provider"):
            raise ValueError(f"unknown counter {self.counter!r}")
        if not self.chars_per_token > 0:
            raise ValueError("chars_per_token must be positive")


def content_chars(samples) -> int:
    return sum(len(m.content) for s in samples for m in s.messages)


def estimate_tokens(samples, counter: str = "approximate",
                    chars_per_token: float = DEFAULT_CHARS_PER_TOKEN, job=None) -> int:
    """Tokens in one pass over ``samples``.

    The approximate counter is ``ceil(chars / chars_per_token)``. The
    provider counter returns ``job.trained_tokens`` (which already covers
    all epochs).
    """
    if counter == "provider":
        if job is None or job.trained_tokens is None:
            raise ValueError("provider counter needs a succeeded job with trained_tokens")
        return int(job.trained_tokens)
    if counter != "approximate":
        raise ValueError(f"unknown counter {counter!r}")
    return math.ceil(content_chars(samples) / chars_per_token)


def trained_tokens(samples, model: CostModel) -> int:
    return estimate_tokens(samples, "approximate", model.chars_per_token) * model.epochs


def estimate_cost(tokens_trained: int, model: CostModel | None = None) -> float:
    if tokens_trained < 0:
        raise ValueError("token count must be >= 0")
    model = model or CostModel()
    return tokens_trained * model.price_per_million_tokens / 1_000_000


def cost_curve(samples, model: CostModel, counts=FIGURE_SAMPLE_COUNTS) -> list[tuple[int, int, float]]:
    """(n_samples, trained tokens, cost) rows, scaling the mean per-sample size.

    Counts larger than ``len(samples)`` are extrapolated from the average
    sample length, so the curve can be drawn from a small dataset.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("cost curve needs at least one sample")
    per_sample_chars = content_chars(samples) / len(samples)
    rows = []
    for n in counts:
        if n <= len(samples):
            chars = content_chars(samples[:n])
        else:
            chars = per_sample_chars * n
        tokens = math.ceil(chars / model.chars_per_token) * model.epochs
        rows.append((n, tokens, estimate_cost(tokens, model)))
    return rows
