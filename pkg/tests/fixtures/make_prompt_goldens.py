"""Rewrite the golden prompt files under ``prompts/``.

Run from the repository root after an intended change to prompt rendering:

    python3 tests/fixtures/make_prompt_goldens.py

Then review the diff by hand before committing it.
"""

import itertools
import sys
from datetime import date
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from helpers import golden_day  # noqa: E402

from loadpatch.promptset import (PromptVariant, build_test_prompt,  # noqa: E402
                                 build_training_sample, write_dataset)

OUT = Path(__file__).parent / "prompts"


def golden_days():
    return [golden_day(40), golden_day(0, "user1", date(2018, 7, 2)),
            golden_day(80, "user2", date(2018, 7, 3))]


def main():
    OUT.mkdir(exist_ok=True)
    days = golden_days()
    for flags in itertools.product([False, True], repeat=3):
        v = PromptVariant(*flags)
        stem = v.name.replace(",", "-")
        write_dataset([build_training_sample(d, v) for d in days], OUT / f"{stem}.train.jsonl")
        write_dataset([build_test_prompt(d, v) for d in days], OUT / f"{stem}.test.jsonl")


if __name__ == "__main__":
    main()
