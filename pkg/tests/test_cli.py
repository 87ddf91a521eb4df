import json

import pytest

from loadpatch.cli import main
from loadpatch.orchestrator import Manifest

from helpers import FIXTURES


@pytest.fixture(scope="module")
def workspace(tmp_path_factory, raw_dir):
    """ingest + prepare once for the CLI tests in this module."""
    ws = tmp_path_factory.mktemp("cli")
    assert main(["ingest", "--load", str(raw_dir / "user*.csv"), "--temperature",
                 str(raw_dir / "temperature.csv"), "--out", str(ws / "days.jsonl")]) == 0
    assert main(["prepare", "--dataset", str(ws / "days.jsonl"), "--seed", "7",
                 "--out", str(ws / "prepared.jsonl")]) == 0
    return ws


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    out = capsys.readouterr().out
    for command in ("ingest", "prepare", "build-dataset", "run", "stage2", "restore",
                    "evaluate", "cost", "report"):
        assert command in out


def test_subcommand_help_lists_flags(capsys):
    assert main(["run", "--help"]) == 0
    out = capsys.readouterr().out
    for flag in ("--config", "--prepared", "--backend", "--preset", "--seed", "--out"):
        assert flag in out


def test_unknown_subcommand_is_usage_error(capsys):
    assert main(["frobnicate"]) == 2


def test_unknown_flag_is_usage_error(capsys):
    assert main(["report", "--manifest", "x", "--colour"]) == 2


def test_missing_manifest_exits_one(tmp_path, capsys):
    assert main(["report", "--manifest", str(tmp_path / "none.jsonl")]) == 1
    assert "not found" in capsys.readouterr().err


def test_empty_manifest(tmp_path, capsys):
    path = tmp_path / "m.jsonl"
    path.write_text("")
    assert main(["report", "--manifest", str(path)]) == 0
    assert capsys.readouterr().out.strip() == "no experiments"


def test_ingest_reports_counts(workspace, capsys):
    assert (workspace / "days.jsonl").exists()
    header = json.loads((workspace / "prepared.jsonl").read_text().splitlines()[0])
    assert header["seed"] == 7 and header["mask_len"] == 16


def test_ingest_bad_file_exits_one(tmp_path, capsys):
    (tmp_path / "u.csv").write_text("timestamp,kw\n2018-07-01T00:00,abc\n")
    (tmp_path / "t.csv").write_text("2018-07-01T00:00,70\n")
    assert main(["ingest", "--load", str(tmp_path / "u.csv"), "--temperature",
                 str(tmp_path / "t.csv"), "--out", str(tmp_path / "d.jsonl")]) == 1
    assert "line 2" in capsys.readouterr().err


def test_build_dataset(workspace, capsys):
    out = workspace / "ds" / "s5.jsonl"
    assert main(["build-dataset", "--prepared", str(workspace / "prepared.jsonl"),
                 "--variant", "advanced,separate", "--n", "40", "--seed", "3", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 40
    assert len(json.loads(lines[0])["messages"]) == 6
    test_lines = (workspace / "ds" / "s5.test.jsonl").read_text().splitlines()
    assert len(json.loads(test_lines[0])["messages"]) == 5


def test_build_dataset_bad_variant(workspace, capsys):
    assert main(["build-dataset", "--prepared", str(workspace / "prepared.jsonl"),
                 "--variant", "fancy", "--out", str(workspace / "x.jsonl")]) == 2


def test_run_echo_report_is_zero(workspace, capsys):
    out = workspace / "run-echo"
    assert main(["run", "--prepared", str(workspace / "prepared.jsonl"), "--preset", "scenario7",
                 "--backend", "echo", "--seed", "7", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    line = next(x for x in text.splitlines() if x.startswith("scenario7"))
    assert line.split()[6:9] == ["0.000", "0.000", "0.000"]


def test_run_needs_seed(workspace, capsys):
    assert main(["run", "--prepared", str(workspace / "prepared.jsonl"), "--out",
                 str(workspace / "r")]) == 1


def test_run_from_config(workspace, tmp_path, capsys):
    cfg = tmp_path / "run.yaml"
    cfg.write_text(f"seed: 7\nprepared: {workspace / 'prepared.jsonl'}\nout_dir: {tmp_path / 'out'}\n"
                   "scenario: {label: tiny, n_samples: 12, advanced_prompt: true}\nbackend: interp\n")
    assert main(["run", "--config", str(cfg)]) == 0
    (row,) = Manifest(tmp_path / "out" / "manifest.jsonl").rows()
    assert row["label"] == "tiny" and row["backend"] == "interp_stub"


def test_stage2_command(workspace, capsys):
    out = workspace / "run-s2"
    assert main(["stage2", "--prepared", str(workspace / "prepared.jsonl"), "--backend", "echo",
                 "--seed", "7", "--counts", "10,20", "--no-direct", "--out", str(out)]) == 0
    labels = [r["label"] for r in Manifest(out / "manifest.jsonl").rows()]
    assert labels == ["scenario7", "user10/GPT-FT-1", "user10/GPT-FT-2/n=10", "user10/GPT-FT-2/n=20"]


def test_restore_evaluate_cost(workspace, capsys):
    ds = workspace / "ds7" / "s7.jsonl"
    prep = str(workspace / "prepared.jsonl")
    assert main(["build-dataset", "--prepared", prep, "--preset", "scenario7", "--seed", "7",
                 "--out", str(ds)]) == 0
    test_file = workspace / "ds7" / "s7.test.jsonl"
    results = workspace / "res" / "interp.jsonl"
    assert main(["restore", "--prepared", prep, "--prompts", str(test_file), "--backend", "interp",
                 "--model", "any", "--out", str(results)]) == 0
    assert main(["evaluate", "--results", str(results), "--report", str(workspace / "res" / "r.txt"),
                 "--figures", str(workspace / "res" / "r.png")]) == 0
    summary = json.loads((workspace / "res" / "r.json").read_text())
    assert summary["n_failed"] == 0 and summary["mpe"] > 0
    assert (workspace / "res" / "r.png").stat().st_size > 0
    capsys.readouterr()
    assert main(["cost", "--dataset", str(ds), "--figure", str(workspace / "res" / "cost.png")]) == 0
    out = capsys.readouterr().out
    assert "samples: 512" in out
    assert [line.split(",")[0] for line in out.splitlines() if line[:3] in ("128", "256", "512")] == ["128", "256", "512"]


def test_restore_from_completions_file(workspace, tmp_path, capsys):
    prep = str(workspace / "prepared.jsonl")
    ds = tmp_path / "d.jsonl"
    assert main(["build-dataset", "--prepared", prep, "--n", "5", "--out", str(ds)]) == 0
    train = [json.loads(x) for x in ds.read_text().splitlines()]
    with (tmp_path / "c.jsonl").open("w") as fh:
        for rec in train[:3]:
            meta = rec["meta"]
            fh.write(json.dumps({"user_id": meta["user_id"], "date": meta["date"],
                                 "mask_start": meta["mask_start"],
                                 "completion": rec["messages"][-1]["content"]}) + "\n")
    # prompts for the same three days
    with (tmp_path / "p.jsonl").open("w") as fh:
        for rec in train[:3]:
            fh.write(json.dumps({"messages": rec["messages"][:-1], "meta": rec["meta"]}) + "\n")
    assert main(["restore", "--prepared", prep, "--prompts", str(tmp_path / "p.jsonl"),
                 "--completions", str(tmp_path / "c.jsonl"), "--out", str(tmp_path / "r.jsonl")]) == 0
    assert "3/3 restored" in capsys.readouterr().out


def test_report_reference_fixture(tmp_path, capsys):
    assert main(["report", "--manifest", str(FIXTURES / "reference_manifest.jsonl"),
                 "--out-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    line = next(x for x in out.splitlines() if x.startswith("GPT-FT-1 "))
    assert line.split()[2:5] == ["2.221", "1.977", "1.443"]
    assert (tmp_path / "report.csv").exists() and (tmp_path / "metrics_reference-transfer.png").exists()
