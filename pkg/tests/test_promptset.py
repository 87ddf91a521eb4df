import itertools
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from loadpatch import codec
from loadpatch.errors import DatasetReadError, DatasetValidationError, PreconditionError
from loadpatch.promptset import (ASK_COMBINED, ASK_LOAD, ASK_TEMPERATURE, ASSISTANT,
                                 TERSE_INSTRUCTION, USER, ChatMessage, ChatSample, PromptVariant,
                                 build_test_prompt, build_training_sample, prompt_load_values,
                                 read_dataset, validate_finetune_samples, write_dataset)

from helpers import FIXTURES, golden_day, ternary_oracle
from make_prompt_goldens import golden_days

VARIANTS = [PromptVariant(*f) for f in itertools.product([False, True], repeat=3)]
variants = st.sampled_from(VARIANTS)
starts = st.integers(0, 80)


def roles(sample):
    return [m.role for m in sample.messages]


@pytest.mark.parametrize("v", VARIANTS, ids=lambda v: v.name)
def test_message_counts(v):
    train = build_training_sample(golden_day(), v)
    test = build_test_prompt(golden_day(), v)
    n = 6 if v.separate_load_temp else 4
    assert len(train.messages) == n
    assert len(test.messages) == n - 1
    assert roles(train) == [USER, ASSISTANT] * (n // 2)


def test_fixed_assistant_questions():
    combined = build_training_sample(golden_day(), PromptVariant(True))
    separate = build_training_sample(golden_day(), PromptVariant(True, True))
    assert combined.messages[1].content == ASK_COMBINED
    assert separate.messages[1].content == ASK_LOAD
    assert separate.messages[3].content == ASK_TEMPERATURE


def test_instruction_text():
    assert PromptVariant().instruction() == TERSE_INSTRUCTION
    assert PromptVariant(False, True, True).instruction() == TERSE_INSTRUCTION
    assert "OOOOO" in PromptVariant(True).instruction()
    assert "ternary" in PromptVariant(True, True).instruction()
    for v in (PromptVariant(True, False, True), PromptVariant(True, True, True)):
        text = v.instruction()
        assert "integers between 0 and 200" in text
        assert "ternary" not in text


def test_encoded_prompt_content():
    day = golden_day()
    sample = build_training_sample(day, PromptVariant(True))
    words = sample.messages[2].content.split(" ")
    assert len(words) == 96
    for i, w in enumerate(words):
        load = day.base.load_q[i]
        expected_load = "OOOOO" if load is None else ternary_oracle(load)
        assert w == expected_load + ternary_oracle(day.base.temp_q[i])
    completion = sample.completion.split(" ")
    assert completion == [ternary_oracle(q) for q in day.full_load_q()]


def test_integer_prompt_uses_zero_for_missing():
    day = golden_day()
    sample = build_training_sample(day, PromptVariant(True, True, True))
    load = sample.messages[2].content.split(" ")
    assert load[40:56] == ["0"] * 16
    assert load[39] == str(day.base.load_q[39])
    pairs = build_test_prompt(day, PromptVariant(True, False, True)).messages[2].content.split(" ")
    assert pairs[40] == f"0,{day.base.temp_q[40]}"


def test_variant_names_parse_back():
    for v in VARIANTS:
        assert PromptVariant.parse(v.name) == v
    with pytest.raises(ValueError):
        PromptVariant.parse("advanced,fancy")


def test_prompt_load_values_recovers_masked_load():
    day = golden_day()
    for v in VARIANTS:
        values = prompt_load_values(build_test_prompt(day, v))
        expected = [0 if x is None else x for x in day.base.load_q] if v.discard_encoding else list(day.base.load_q)
        assert values == expected


@given(variants, starts)
def test_test_prompt_is_training_minus_completion(v, start):
    day = golden_day(start)
    train = build_training_sample(day, v)
    assert build_test_prompt(day, v) == train.without_completion()
    assert roles(train)[-1] == ASSISTANT


@given(variants, starts)
def test_completion_is_full_profile(v, start):
    day = golden_day(start)
    text = build_training_sample(day, v).completion
    values = [int(t) for t in text.split()] if v.discard_encoding else codec.decode_series(text)
    assert values == day.full_load_q()


def test_test_prompt_has_no_completion():
    with pytest.raises(PreconditionError):
        _ = build_test_prompt(golden_day(), PromptVariant()).completion
    with pytest.raises(PreconditionError):
        build_test_prompt(golden_day(), PromptVariant()).without_completion()


def test_empty_message_rejected():
    with pytest.raises(ValueError):
        ChatMessage(USER, "")


@pytest.mark.parametrize("v", VARIANTS, ids=lambda v: v.name)
def test_golden_files(tmp_path, v):
    stem = v.name.replace(",", "-")
    days = golden_days()
    for kind, build in (("train", build_training_sample), ("test", build_test_prompt)):
        out = write_dataset([build(d, v) for d in days], tmp_path / f"{stem}.{kind}.jsonl")
        golden = FIXTURES / "prompts" / f"{stem}.{kind}.jsonl"
        assert out.read_bytes() == golden.read_bytes()


def test_dataset_round_trip(tmp_path):
    v = PromptVariant(True, True, True)
    samples = [build_training_sample(golden_day(s), v) for s in (0, 17, 80)]
    path = write_dataset(samples, tmp_path / "d.jsonl")
    assert len(path.read_text().splitlines()) == 3
    assert read_dataset(path) == samples


def test_meta_can_be_left_out(tmp_path):
    path = write_dataset([build_training_sample(golden_day(), PromptVariant())],
                         tmp_path / "d.jsonl", with_meta=False)
    assert list(json.loads(path.read_text())) == ["messages"]


def test_many_samples_one_line_each(tmp_path):
    sample = build_training_sample(golden_day(), PromptVariant())
    path = write_dataset([sample] * 512, tmp_path / "d.jsonl")
    assert len(path.read_text().splitlines()) == 512


def test_mixed_shapes_rejected(tmp_path):
    day = golden_day()
    mixed = [build_training_sample(day, PromptVariant()), build_test_prompt(day, PromptVariant())]
    with pytest.raises(DatasetValidationError):
        write_dataset(mixed, tmp_path / "d.jsonl")
    with pytest.raises(DatasetValidationError):
        validate_finetune_samples([mixed[1]])


def test_bad_roles_rejected(tmp_path):
    bad = ChatSample((ChatMessage(ASSISTANT, "hi"), ChatMessage(USER, "x")))
    with pytest.raises(DatasetValidationError):
        write_dataset([bad], tmp_path / "d.jsonl")


def test_missing_messages_names_line(tmp_path):
    path = tmp_path / "d.jsonl"
    good = json.dumps({"messages": [{"role": "user", "content": "a"}]})
    path.write_text(f"{good}\n{good}\n{json.dumps({'meta': {}})}\n")
    with pytest.raises(DatasetReadError) as info:
        read_dataset(path)
    assert info.value.line == 3

