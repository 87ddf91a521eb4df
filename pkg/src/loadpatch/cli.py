"""``loadpatch`` command line.

Exit status: 0 on success, 1 on a pipeline error, 2 on a usage error.
All randomness derives from ``--seed`` (see :mod:`loadpatch.seeding`).
"""

from __future__ import annotations

import argparse
import glob
import json
import logging
import sys
from pathlib import Path

from . import __version__, costing
from .backend import BackendHandle, JobStore, make_backend
from .config import ConfigError, RunConfig, load_config, scenario_from
from .errors import LoadpatchError
from .ingestion import (align_and_segment, ingest_load_csv, ingest_temperature_csv,
                        read_days, summarize, write_days)
from .metrics import format_percent
from .orchestrator import (PRESETS, Manifest, Runner, StagePlan, choose_training,
                           read_results, report_from_records, restore_and_score,
                           split_user_days, write_results)
from .preprocess import DEFAULT_ABNORMAL_THRESHOLD, MASK_LEN, prepare, read_prepared, write_prepared
from .promptset import (PromptVariant, build_test_prompt, build_training_sample, read_dataset,
                        write_dataset)
from .reporting import render_report, write_delimited

logger = logging.getLogger("loadpatch")


def _counts(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _fraction(text: str) -> float:
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError("must be between 0 and 1")
    return value


def _variant(text: str) -> PromptVariant:
    try:
        return PromptVariant.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _out(path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


# -- subcommands ---------------------------------------------------------------

def cmd_ingest(args) -> int:
    paths = sorted({p for pattern in args.load for p in glob.glob(pattern)})
    if not paths:
        raise LoadpatchError(f"no load files match {' '.join(args.load)}")
    temp = ingest_temperature_csv(args.temperature, tz=args.tz)
    days = []
    for path in paths:
        user = Path(path).stem
        series = ingest_load_csv(path, user, tz=args.tz)
        days += align_and_segment(series, temp)
    stats = summarize(days)
    write_days(days, _out(args.out), tz=args.tz)
    print(f"{stats.n_days} days from {stats.n_users} users -> {args.out}")
    print(f"load [{stats.load_min:.1f}, {stats.load_max:.1f}] kW, "
          f"temperature [{stats.temp_min:.1f}, {stats.temp_max:.1f}]")
    return 0


def cmd_prepare(args) -> int:
    days = read_days(args.dataset)
    ds = prepare(days, args.seed, abnormal_threshold=args.abnormal_threshold)
    write_prepared(ds, _out(args.out))
    p = ds.params
    print(f"{len(ds.days)} masked days ({len(ds.abnormal)} abnormal) -> {args.out}")
    print(f"normalization: load [{p.load_min:.1f}, {p.load_max:.1f}], "
          f"temperature [{p.temp_min:.1f}, {p.temp_max:.1f}]")
    return 0


def cmd_build_dataset(args) -> int:
    ds = read_prepared(args.prepared)
    if args.preset:
        scenario = PRESETS[args.preset]
        variant, n, remove_abnormal = scenario.variant, scenario.n_samples, scenario.remove_abnormal_days
    else:
        variant, n, remove_abnormal = args.variant, args.n, args.remove_abnormal
    if args.n is not None:
        n = args.n
    users = args.users.split(",") if args.users else ds.users()
    train, test = split_user_days(ds, users, args.seed, args.split)
    if n is None:
        n = len(train)
    picked = choose_training(ds, train, n, args.seed, remove_abnormal)
    out = _out(args.out)
    write_dataset([build_training_sample(d, variant) for d in picked], out)
    test_out = out.with_name(out.stem + ".test" + out.suffix)
    write_dataset([build_test_prompt(d, variant) for d in test], test_out)
    print(f"{len(picked)} training samples ({variant.name}) -> {out}")
    print(f"{len(test)} test prompts -> {test_out}")
    return 0


def _run_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else None
    if cfg is None:
        if args.seed is None:
            raise ConfigError("--seed is required (or a --config with a seed)")
        cfg = RunConfig(seed=args.seed)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.prepared:
        cfg.prepared = args.prepared
    if args.out:
        cfg.out_dir = args.out
    if args.backend or args.base_model or args.max_in_flight:
        b = cfg.backend
        kind = args.backend or b.kind
        cfg.backend = BackendHandle(
            kind, args.base_model or b.base_model_id,
            b.credentials_env if BackendHandle(kind).kind == "remote" else None,
            b.base_url, args.max_in_flight or b.max_in_flight)
    if not cfg.prepared:
        raise ConfigError("no prepared dataset given (--prepared or config 'prepared')")
    return cfg


def _runner(cfg: RunConfig, targets=None, counts=None, direct=None) -> Runner:
    out = cfg.check_output_dir()
    ds = read_prepared(cfg.prepared)
    plan_kw = dict(cfg.plan)
    if targets is not None:
        plan_kw["stage2_targets"] = targets
    if counts is not None:
        plan_kw["stage2_sample_counts"] = counts
    if direct is not None:
        plan_kw["direct_control"] = direct
    if "stage1_users" in plan_kw:
        plan = StagePlan(**plan_kw)
        plan.validate()
    else:
        t = plan_kw.pop("stage2_targets", None)
        plan = StagePlan.default_for(ds, targets=t, **plan_kw)
    kw = {"cost_model": cfg.cost} if cfg.backend.kind != "remote" else {}
    backend = make_backend(cfg.backend, JobStore(out / "jobs.jsonl"), **kw)
    return Runner(ds, backend, out, cfg.seed, plan, cfg.cost, cfg.hyperparams)


def _print_rows(rows) -> None:
    print(render_report(rows), end="")


def cmd_run(args) -> int:
    cfg = _run_config(args)
    if args.preset == "all":
        presets = list(PRESETS.values())
    elif args.preset:
        presets = [PRESETS[args.preset]]
    else:
        presets = [cfg.scenario]
    runner = _runner(cfg)
    rows = runner.run_matrix(presets)
    _print_rows(rows)
    return 0 if all(r["status"] == "completed" for r in rows) else 1


def cmd_stage2(args) -> int:
    cfg = _run_config(args)
    if args.preset:
        cfg.scenario = scenario_from(args.preset, None)
    runner = _runner(cfg, targets=args.target, counts=args.counts,
                     direct=False if args.no_direct else None)
    rows = []
    for target in runner.plan.stage2_targets:
        rows += runner.run_stage2_experiment(target, cfg.scenario)
    _print_rows(rows)
    return 0 if all(r["status"] == "completed" for r in rows) else 1


def cmd_restore(args) -> int:
    ds = read_prepared(args.prepared)
    prompts = read_dataset(args.prompts)
    by_key = ds.by_key()
    days = []
    for i, p in enumerate(prompts, start=1):
        if p.day_ref is None or p.day_ref.key not in by_key:
            raise LoadpatchError(f"prompt {i} has no day reference known to {args.prepared}")
        days.append(by_key[p.day_ref.key])
    if args.completions:
        completions = _read_completions(args.completions, prompts)
    else:
        if not args.backend or not args.model:
            raise ConfigError("give --completions, or --backend with --model")
        out_dir = Path(args.out).parent
        backend = make_backend(BackendHandle(args.backend), JobStore(out_dir / "jobs.jsonl"))
        backend.register(ds.days)
        completions = backend.complete_many(args.model, prompts)
    records = restore_and_score(days, prompts, completions, ds.params)
    write_results(records, args.out, args.label or Path(args.prompts).stem, ds.params)
    n_ok = sum(r["status"] == "ok" for r in records)
    print(f"{n_ok}/{len(records)} restored -> {args.out}")
    return 0


def _read_completions(path, prompts) -> list[str]:
    """Completions file: one JSON object per line with ``completion`` and the
    day reference (``user_id``, ``date``, ``mask_start``), in any order."""
    found = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                key = f"{obj['user_id']}/{obj['date']}/{obj['mask_start']}"
                found[key] = obj["completion"]
            except (json.JSONDecodeError, KeyError, TypeError):
                raise LoadpatchError(f"{path}: line {lineno}: bad completion record") from None
    out = []
    for p in prompts:
        if p.day_ref.key in found:
            out.append(found[p.day_ref.key])
        else:
            out.append(LoadpatchError(f"no completion for {p.day_ref.key}"))
    return out


def cmd_evaluate(args) -> int:
    header, records = read_results(args.results)
    label = header.get("label") or Path(args.results).stem
    report = report_from_records(records, label)
    row = {"experiment": "evaluate", "label": label, "status": "completed",
           "n_failed": report.n_failed, "metrics": report.means(), "config": None}
    text = render_report([row])
    report_path = _out(args.report)
    report_path.write_text(text)
    summary = {"label": label, "n_ok": report.n_ok, "n_failed": report.n_failed,
               **report.means(),
               "percent": {k: format_percent(v) for k, v in report.means().items()
                           if k != "rmse_kw"}}
    report_path.with_suffix(".json").write_text(json.dumps(summary, indent=2) + "\n")
    if args.figures:
        from .plotting import restoration_examples
        restoration_examples(records, _out(args.figures), title=label)
    print(text, end="")
    return 0


def cmd_cost(args) -> int:
    samples = read_dataset(args.dataset)
    if not samples:
        raise LoadpatchError(f"{args.dataset} holds no samples")
    model = costing.CostModel(args.price, args.epochs, chars_per_token=args.chars_per_token)
    tokens = costing.trained_tokens(samples, model)
    print(f"samples: {len(samples)}")
    print(f"tokens per epoch: {tokens // model.epochs}")
    print(f"tokens trained ({model.epochs} epochs): {tokens}")
    print(f"cost: ${costing.estimate_cost(tokens, model):.2f}")
    curve = costing.cost_curve(samples, model)
    print("samples,tokens,cost_usd")
    for n, t, c in curve:
        print(f"{n},{t},{c:.2f}")
    if args.figure:
        from .plotting import cost_curve
        cost_curve(curve, _out(args.figure))
    return 0


def cmd_report(args) -> int:
    path = Path(args.manifest)
    if not path.exists():
        raise LoadpatchError(f"manifest {path} not found")
    rows = Manifest(path).rows()
    print(render_report(rows), end="")
    if args.out_dir and rows:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(render_report(rows))
        write_delimited(rows, out / "report.csv")
        if not args.no_figures:
            from .plotting import report_figures
            report_figures(rows, out, results_root=path.parent)
    return 0


# -- parser --------------------------------------------------------------------

def _run_options(p) -> None:
    p.add_argument("--config", help="run config file (YAML/JSON, see loadpatch.config)")
    p.add_argument("--prepared", help="prepared dataset file")
    p.add_argument("--backend", choices=["echo", "interp", "remote"])
    p.add_argument("--base-model", help="base model id (default gpt-3.5-turbo)")
    p.add_argument("--max-in-flight", type=int, help="parallel chat requests (default 4)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loadpatch",
        description="Build LLM fine-tuning datasets for missing load data restoration, "
                    "run fine-tunes and evaluate restorations.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("ingest", help="read meter/temperature CSVs into a dataset file")
    p.add_argument("--load", nargs="+", required=True, help="glob(s) of per-meter CSVs")
    p.add_argument("--temperature", required=True)
    p.add_argument("--tz", default=None, help="IANA zone of the meter clock (e.g. America/New_York)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("prepare", help="normalize, quantize, mask and flag abnormal days")
    p.add_argument("--dataset", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--mask-len", type=int, default=MASK_LEN, choices=[MASK_LEN])
    p.add_argument("--abnormal-threshold", type=float, default=DEFAULT_ABNORMAL_THRESHOLD)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("build-dataset", help="write fine-tuning JSONL and test prompts")
    p.add_argument("--prepared", required=True)
    p.add_argument("--variant", type=_variant, default=PromptVariant(),
                   help="comma list of advanced,separate,discard (or 'none')")
    p.add_argument("--preset", choices=sorted(PRESETS), help="take variant/n/filter from a preset")
    p.add_argument("--n", type=int, help="number of training samples (default: all)")
    p.add_argument("--split", type=_fraction, default=0.8, help="training fraction per user")
    p.add_argument("--remove-abnormal", action="store_true")
    p.add_argument("--users", help="comma-separated user ids (default: all)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("run", help="stage-1 fine-tune, restore and evaluate scenario presets")
    _run_options(p)
    p.add_argument("--preset", choices=sorted(PRESETS) + ["all"])
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("stage2", help="stage-2 sweep and direct control for target users")
    _run_options(p)
    p.add_argument("--target", action="append", help="target user (repeatable)")
    p.add_argument("--counts", type=_counts, help="sample counts, e.g. 10,20,30,40,50")
    p.add_argument("--preset", choices=sorted(PRESETS), help="stage-1 scenario (default scenario7)")
    p.add_argument("--no-direct", action="store_true", help="skip the direct fine-tune control")
    p.set_defaults(func=cmd_stage2)

    p = sub.add_parser("restore", help="decode completions into restored segments")
    p.add_argument("--prepared", required=True)
    p.add_argument("--prompts", required=True, help="test prompts JSONL")
    p.add_argument("--completions", help="JSONL of {user_id, date, mask_start, completion}")
    p.add_argument("--backend", choices=["echo", "interp", "remote"])
    p.add_argument("--model", help="model id to query when no completions file is given")
    p.add_argument("--label")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_restore)

    p = sub.add_parser("evaluate", help="aggregate a results file into a metrics report")
    p.add_argument("--results", required=True)
    p.add_argument("--report", required=True, help="text report path (JSON written alongside)")
    p.add_argument("--figures", help="PNG path for restored-profile examples")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("cost", help="token and fine-tuning cost estimate for a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--epochs", type=int, default=costing.DEFAULT_EPOCHS)
    p.add_argument("--price", type=float, default=costing.DEFAULT_PRICE_PER_MILLION,
                   help="USD per million trained tokens")
    p.add_argument("--chars-per-token", type=float, default=costing.DEFAULT_CHARS_PER_TOKEN)
    p.add_argument("--figure", help="PNG path for the tokens/cost curve")
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("report", help="render manifest rows as tables (and figures)")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", help="also write report.txt, report.csv and PNG figures here")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (LoadpatchError, OSError, ValueError) as exc:
        print(f"loadpatch {args.command}: error: {exc}", file=sys.stderr)
        return 1


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
