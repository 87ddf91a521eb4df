"""Two-stage fine-tuning runs, the scenario matrix and the stage-2 sweep.

Every run writes into an output directory::

    <out>/manifest.jsonl          one row per evaluated model (append-only)
    <out>/jobs.jsonl              fine-tuning job log
    <out>/<slug>/train.jsonl      fine-tuning dataset
    <out>/<slug>/test.jsonl       test prompts
    <out>/<slug>/results.jsonl    per-sample restorations and metrics

Manifest rows are keyed by (experiment, label, seed, backend kind). A rerun
skips rows already marked completed, so a paid fine-tune is never repeated.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import costing
from .backend import Backend, FineTuneJob
from .errors import (CapacityError, DependencyError, EmptyReportError,
                     LoadpatchError, PlanValidationError, RestorationFailed,
                     StorageError, UndefinedMetricError)
from .metrics import MetricsReport, aggregate, sample_metrics, SampleMetrics
from .preprocess import MaskedDay, NormalizationParams, PreparedDataset
from .promptset import (PromptVariant, build_test_prompt, build_training_sample,
                        write_dataset)
from .restorer import compose_profile, extract_restored
from .seeding import derive_seed

logger = logging.getLogger(__name__)

MANIFEST_SCHEMA = "loadpatch.manifest"
MANIFEST_VERSION = 1
RESULTS_SCHEMA = "loadpatch.results"
RESULTS_VERSION = 1


@dataclass(frozen=True)
class ScenarioConfig:
    label: str
    n_samples: int
    advanced_prompt: bool = False
    separate_load_temp: bool = False
    discard_encoding: bool = False
    remove_abnormal_days: bool = False

    @property
    def variant(self) -> PromptVariant:
        return PromptVariant(self.advanced_prompt, self.separate_load_temp, self.discard_encoding)

    def flags(self) -> str:
        yn = lambda b: "Y" if b else "N"  # noqa: E731
        return " ".join([str(self.n_samples), yn(self.advanced_prompt), yn(self.separate_load_temp),
                         yn(self.discard_encoding), yn(self.remove_abnormal_days)])

    def to_dict(self) -> dict:
        return asdict(self)


PRESETS: dict[str, ScenarioConfig] = {
    "scenario1": ScenarioConfig("scenario1", 128),
    "scenario2": ScenarioConfig("scenario2", 256),
    "scenario3": ScenarioConfig("scenario3", 512),
    "scenario4": ScenarioConfig("scenario4", 512, True),
    "scenario5": ScenarioConfig("scenario5", 512, True, True),
    "scenario6": ScenarioConfig("scenario6", 512, True, True, True),
    "scenario7": ScenarioConfig("scenario7", 512, True, True, True, True),
}


@dataclass
class StagePlan:
    stage1_users: list[str]
    stage2_targets: list[str] = field(default_factory=list)
    stage2_sample_counts: list[int] = field(default_factory=lambda: [10, 20, 30, 40, 50])
    direct_control: bool = True
    train_fraction: float = 0.8
    direct_train: int = 68
    direct_test: int = 18

    def validate(self) -> None:
        if not self.stage1_users:
            raise PlanValidationError("stage 1 needs at least one user")
        overlap = set(self.stage2_targets) & set(self.stage1_users)
        if overlap:
            raise PlanValidationError(
                f"stage-2 target(s) {sorted(overlap)} also appear in the stage-1 users")
        if not 0 < self.train_fraction < 1:
            raise PlanValidationError("train_fraction must be in (0, 1)")
        if any(c < 1 for c in self.stage2_sample_counts):
            raise PlanValidationError("stage-2 sample counts must be positive")

    @classmethod
    def default_for(cls, prepared: PreparedDataset, targets=None, **kw) -> "StagePlan":
        """First ten users (natural order) for stage 1, the next one as target."""
        users = prepared.users()
        if targets is None:
            targets = users[10:11]
        stage1 = [u for u in users if u not in set(targets)][:10]
        plan = cls(stage1, list(targets), **kw)
        plan.validate()
        return plan


# -- manifest ------------------------------------------------------------------

def row_key(experiment: str, label: str, seed: int, backend_kind: str) -> str:
    text = json.dumps([experiment, label, seed, backend_kind])
    return hashlib.sha256(text.encode()).hexdigest()[:16]


class Manifest:
    def __init__(self, path):
        self.path = Path(path)

    def rows(self) -> list[dict]:
        if not self.path.exists():
            return []
        try:
            lines = self.path.read_text().splitlines()
        except OSError as exc:
            raise StorageError(f"cannot read manifest {self.path}: {exc}") from exc
        if not lines:
            return []
        try:
            header = json.loads(lines[0])
        except json.JSONDecodeError:
            raise StorageError(f"{self.path}: unreadable manifest header") from None
        if header.get("schema") != MANIFEST_SCHEMA:
            raise StorageError(f"{self.path}: not a manifest (schema={header.get('schema')!r})")
        rows = []
        for lineno, line in enumerate(lines[1:], start=2):
            if line.strip():
                try:
                    rows.append(json.loads(line))
                except json.JSONDecodeError:
                    raise StorageError(f"{self.path}: line {lineno} is not valid JSON") from None
        return rows

    def completed(self, key: str) -> dict | None:
        found = None
        for row in self.rows():
            if row.get("key") == key and row.get("status") == "completed":
                found = row
        return found

    def append(self, row: dict) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fresh = not self.path.exists() or self.path.stat().st_size == 0
        with self.path.open("a") as fh:
            if fresh:
                fh.write(json.dumps({"schema": MANIFEST_SCHEMA, "version": MANIFEST_VERSION}) + "\n")
            fh.write(json.dumps(row) + "\n")


# -- per-sample results --------------------------------------------------------

def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.=-]+", "_", text).strip("_")


def restore_and_score(days: list[MaskedDay], prompts, completions,
                      params: NormalizationParams) -> list[dict]:
    """One result record per day. Failed samples carry ``status: failed``."""
    records = []
    for day, prompt, completion in zip(days, prompts, completions):
        rec = {"user_id": day.user_id, "date": day.date.isoformat(),
               "mask_start": day.mask.start_index, "truth_kw": list(day.truth_kw)}
        if isinstance(completion, Exception):
            rec.update(status="failed", error=f"{type(completion).__name__}: {completion}")
            records.append(rec)
            continue
        try:
            res = extract_restored(completion, day, prompt.variant, params)
            m = sample_metrics(day.truth_kw, res.restored_kw, params.load_span)
        except (RestorationFailed, UndefinedMetricError) as exc:
            rec.update(status="failed", error=f"{type(exc).__name__}: {exc}",
                       raw_completion=completion)
            records.append(rec)
            continue
        rec.update(status="ok", restored_q=list(res.restored_q),
                   restored_kw=list(res.restored_kw), repairs=list(res.repairs),
                   metrics=m.to_dict(), profile_kw=compose_profile(day, res.restored_q, params),
                   raw_completion=completion)
        records.append(rec)
    return records


def write_results(records: list[dict], path, label: str, params: NormalizationParams) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        fh.write(json.dumps({"schema": RESULTS_SCHEMA, "version": RESULTS_VERSION,
                             "label": label, "params": params.to_dict()}) + "\n")
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def read_results(path) -> tuple[dict, list[dict]]:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise StorageError(f"{path}: empty results file")
    header = json.loads(lines[0])
    if header.get("schema") != RESULTS_SCHEMA:
        raise StorageError(f"{path}: not a results file")
    return header, [json.loads(line) for line in lines[1:] if line.strip()]


def report_from_records(records: list[dict], label: str) -> MetricsReport:
    ok = [SampleMetrics(**r["metrics"]) for r in records if r.get("status") == "ok"]
    return aggregate(ok, label, n_failed=sum(r.get("status") != "ok" for r in records))


# -- splits --------------------------------------------------------------------

def split_user_days(prepared: PreparedDataset, users, seed: int,
                    train_fraction: float = 0.8) -> tuple[list[MaskedDay], list[MaskedDay]]:
    """Seeded per-user day split; every user contributes to both parts.

    Each user draws from its own sub-seed, so the split of one user does not
    depend on which other users are present.
    """
    by_user: dict[str, list[MaskedDay]] = {}
    for d in prepared.days:
        by_user.setdefault(d.user_id, []).append(d)
    train, test = [], []
    for user in users:
        days = sorted(by_user.get(user, []), key=lambda d: d.date)
        if not days:
            raise PlanValidationError(f"user {user!r} not in the prepared dataset")
        rng = np.random.default_rng(derive_seed(seed, f"split:{user}"))
        order = rng.permutation(len(days))
        n_train = int(train_fraction * len(days))
        train += [days[i] for i in sorted(order[:n_train])]
        test += [days[i] for i in sorted(order[n_train:])]
    return train, test


def choose_training(prepared: PreparedDataset, pool, n_samples: int, seed: int,
                    remove_abnormal: bool = False, label: str = "") -> list[MaskedDay]:
    """Pick ``n_samples`` days from ``pool`` without replacement, in pool order."""
    if remove_abnormal:
        pool = [d for d in pool if not prepared.is_abnormal(d)]
    if n_samples > len(pool):
        raise CapacityError(f"{label or 'dataset'}: not enough training days", len(pool), n_samples)
    rng = np.random.default_rng(derive_seed(seed, f"stage1-sample:{n_samples}"))
    picked = sorted(int(i) for i in rng.choice(len(pool), n_samples, replace=False))
    return [pool[i] for i in picked]


# -- runner --------------------------------------------------------------------

class Runner:
    """Drives fine-tune -> restore -> evaluate for one prepared dataset."""

    def __init__(self, prepared: PreparedDataset, backend: Backend, out_dir, seed: int,
                 plan: StagePlan | None = None, cost_model: costing.CostModel | None = None,
                 hyperparams: dict | None = None):
        self.prepared = prepared
        self.backend = backend
        self.out_dir = Path(out_dir)
        self.seed = int(seed)
        self.plan = plan or StagePlan.default_for(prepared)
        self.plan.validate()
        self.cost_model = cost_model or costing.CostModel()
        self.hyperparams = hyperparams
        self.manifest = Manifest(self.out_dir / "manifest.jsonl")
        self._by_user: dict[str, list[MaskedDay]] = {}
        for d in prepared.days:
            self._by_user.setdefault(d.user_id, []).append(d)
        backend.register(prepared.days)

    # splits

    def _user_days(self, user: str) -> list[MaskedDay]:
        days = self._by_user.get(user)
        if not days:
            raise PlanValidationError(f"user {user!r} not in the prepared dataset")
        return sorted(days, key=lambda d: d.date)

    def stage1_split(self) -> tuple[list[MaskedDay], list[MaskedDay]]:
        return split_user_days(self.prepared, self.plan.stage1_users, self.seed,
                               self.plan.train_fraction)

    def target_split(self, target: str) -> tuple[list[MaskedDay], list[MaskedDay]]:
        """(ordered training pool, test days) for a stage-2 target."""
        days = self._user_days(target)
        n_test = self.plan.direct_test
        if len(days) <= n_test:
            raise CapacityError(f"target {target} has too few days", len(days), n_test + 1)
        rng = np.random.default_rng(derive_seed(self.seed, f"target-split:{target}"))
        order = [int(i) for i in rng.permutation(len(days))]
        test = sorted((days[i] for i in order[:n_test]), key=lambda d: d.date)
        pool = [days[i] for i in order[n_test:]]
        return pool, test

    def _without_abnormal(self, days, scenario: ScenarioConfig):
        if not scenario.remove_abnormal_days:
            return list(days)
        return [d for d in days if not self.prepared.is_abnormal(d)]

    def select_stage1_training(self, scenario: ScenarioConfig) -> list[MaskedDay]:
        train, _ = self.stage1_split()
        return choose_training(self.prepared, train, scenario.n_samples, self.seed,
                               scenario.remove_abnormal_days, scenario.label)

    # building blocks

    def _write_sets(self, slug: str, train_days, test_days, variant: PromptVariant):
        folder = self.out_dir / slug
        folder.mkdir(parents=True, exist_ok=True)
        train_samples = [build_training_sample(d, variant, self.prepared.params) for d in train_days]
        test_prompts = [build_test_prompt(d, variant, self.prepared.params) for d in test_days]
        train_path = write_dataset(train_samples, folder / "train.jsonl") if train_samples else None
        write_dataset(test_prompts, folder / "test.jsonl")
        return train_path, test_prompts

    def _finetune(self, train_path, stage, base_model_id, label) -> FineTuneJob:
        return self.backend.submit_finetune(train_path, self.hyperparams, stage=stage,
                                            base_model_id=base_model_id, label=label)

    def evaluate(self, model_id: str, days: list[MaskedDay], prompts, slug: str,
                 label: str) -> tuple[MetricsReport | None, int, str]:
        completions = self.backend.complete_many(model_id, prompts)
        records = restore_and_score(days, prompts, completions, self.prepared.params)
        rel = f"{slug}/results.jsonl"
        write_results(records, self.out_dir / rel, label, self.prepared.params)
        n_failed = sum(r["status"] != "ok" for r in records)
        try:
            report = report_from_records(records, label)
        except EmptyReportError:
            report = None
        return report, n_failed, rel

    def _row(self, experiment, label, model, *, config=None, jobs=(), model_id=None,
             n_train=0, n_test=0, report=None, n_failed=0, results=None,
             trained_tokens=None, status="completed", error=None) -> dict:
        cost = None if trained_tokens is None else costing.estimate_cost(trained_tokens, self.cost_model)
        return {
            "key": row_key(experiment, label, self.seed, self.backend.kind),
            "experiment": experiment,
            "label": label,
            "model": model,
            "status": status,
            "seed": self.seed,
            "backend": self.backend.kind,
            "config": config,
            "jobs": list(jobs),
            "model_id": model_id,
            "n_train": n_train,
            "n_test": n_test,
            "n_failed": n_failed,
            "metrics": report.means() if report is not None else None,
            "trained_tokens": trained_tokens,
            "cost": cost,
            "results": results,
            "error": error,
        }

    def _guarded(self, experiment, label, model, body, config=None) -> dict:
        key = row_key(experiment, label, self.seed, self.backend.kind)
        done = self.manifest.completed(key)
        if done is not None:
            logger.info("skipping %s/%s: already completed", experiment, label)
            return done
        try:
            row = body()
        except LoadpatchError as exc:
            logger.error("%s/%s failed: %s", experiment, label, exc)
            row = self._row(experiment, label, model, config=config, status="failed",
                            error=f"{type(exc).__name__}: {exc}")
        self.manifest.append(row)
        return row

    # stages

    def run_stage1(self, scenario: ScenarioConfig):
        """Fine-tune the base model on the scenario's stage-1 dataset.

        Returns (job, test days, test prompts).
        """
        train_days = self.select_stage1_training(scenario)
        _, test_days = self.stage1_split()
        train_path, prompts = self._write_sets(_slug(scenario.label), train_days, test_days,
                                               scenario.variant)
        job = self._finetune(train_path, "stage1", None, scenario.label)
        return job, test_days, prompts

    def run_scenario(self, scenario: ScenarioConfig, experiment: str = "matrix") -> dict:
        def body():
            job, test_days, prompts = self.run_stage1(scenario)
            report, n_failed, rel = self.evaluate(job.result_model_id, test_days, prompts,
                                                  _slug(scenario.label), scenario.label)
            return self._row(experiment, scenario.label, job.model_name,
                             config=scenario.to_dict(), jobs=[job.job_id],
                             model_id=job.result_model_id, n_train=scenario.n_samples,
                             n_test=len(test_days), report=report, n_failed=n_failed,
                             results=rel, trained_tokens=job.trained_tokens,
                             status="completed" if report is not None else "failed",
                             error=None if report is not None else "no successful samples")
        return self._guarded(experiment, scenario.label, "GPT-FT-1", body, scenario.to_dict())

    def run_matrix(self, presets=None) -> list[dict]:
        presets = list(PRESETS.values()) if presets is None else list(presets)
        return [self.run_scenario(s) for s in presets]

    def stage1_job(self, scenario: ScenarioConfig) -> FineTuneJob:
        """The stage-1 job for ``scenario``, reusing a completed manifest row."""
        row = self.run_scenario(scenario)
        if row.get("status") != "completed" or not row.get("model_id"):
            raise DependencyError(f"stage-1 run {scenario.label} did not succeed: {row.get('error')}")
        for job in self.backend.list_jobs():
            if job.job_id in row["jobs"]:
                return job
        return FineTuneJob(row["jobs"][0], "stage1", self.backend.handle.base_model_id, "",
                           "succeeded", row["model_id"], row.get("trained_tokens"), scenario.label)

    def _stage2_pool(self, scenario, target):
        if target in self.plan.stage1_users:
            raise PlanValidationError(f"target {target} was used in stage 1")
        pool, test_days = self.target_split(target)
        return self._without_abnormal(pool, scenario), test_days

    def _stage2_job(self, scenario, base_job, target, count) -> FineTuneJob:
        if base_job.status != "succeeded" or base_job.result_model_id is None:
            raise DependencyError(f"stage-1 job {base_job.job_id} has status {base_job.status}")
        pool, test_days = self._stage2_pool(scenario, target)
        if count > len(pool):
            raise CapacityError(f"target {target}: not enough stage-2 days", len(pool), count)
        slug = _slug(f"{target}/stage2-n{count}")
        train_path, _ = self._write_sets(slug, pool[:count], test_days, scenario.variant)
        return self._finetune(train_path, "stage2", base_job.result_model_id, f"{target}-n{count}")

    def run_stage2(self, scenario: ScenarioConfig, base_job: FineTuneJob,
                   target: str) -> list[FineTuneJob]:
        """One fine-tune of the stage-1 model per configured sample count.

        Sample sets are nested: the first ``n`` days of the target's seeded pool.
        """
        if base_job.status != "succeeded" or base_job.result_model_id is None:
            raise DependencyError(f"stage-1 job {base_job.job_id} has status {base_job.status}")
        self._stage2_pool(scenario, target)
        return [self._stage2_job(scenario, base_job, target, c)
                for c in self.plan.stage2_sample_counts]

    def run_direct(self, target: str, scenario: ScenarioConfig) -> FineTuneJob:
        """Fine-tune the base model on target data only (68 train / 18 test)."""
        days = self._user_days(target)
        need = self.plan.direct_train + self.plan.direct_test
        if len(days) < need:
            raise CapacityError(f"target {target}: direct fine-tune needs more days", len(days), need)
        pool, test_days = self.target_split(target)
        train = pool[:self.plan.direct_train]
        train_path, _ = self._write_sets(_slug(f"{target}/direct"), train, test_days,
                                         scenario.variant)
        return self._finetune(train_path, "direct", None, f"{target}-direct")

    def run_stage2_experiment(self, target: str, scenario: ScenarioConfig | None = None) -> list[dict]:
        """Stage-1 model on the target, the stage-2 sweep, and the direct control."""
        scenario = scenario or PRESETS["scenario7"]
        experiment = f"stage2:{target}"
        base_job = self.stage1_job(scenario)
        _, test_days = self.target_split(target)
        variant = scenario.variant
        prompts = [build_test_prompt(d, variant, self.prepared.params) for d in test_days]
        rows = []

        def eval_row(label, model, job, n_train):
            slug = _slug(f"{target}/{label.split('/', 1)[1]}")
            report, n_failed, rel = self.evaluate(job.result_model_id, test_days, prompts, slug, label)
            return self._row(experiment, label, model, config=scenario.to_dict(), jobs=[job.job_id],
                             model_id=job.result_model_id, n_train=n_train, n_test=len(test_days),
                             report=report, n_failed=n_failed, results=rel,
                             trained_tokens=job.trained_tokens,
                             status="completed" if report is not None else "failed",
                             error=None if report is not None else "no successful samples")

        label = f"{target}/GPT-FT-1"
        rows.append(self._guarded(experiment, label, "GPT-FT-1",
                                  lambda: eval_row(label, "GPT-FT-1", base_job, scenario.n_samples)))
        for c in self.plan.stage2_sample_counts:
            lab = f"{target}/GPT-FT-2/n={c}"
            rows.append(self._guarded(
                experiment, lab, "GPT-FT-2",
                lambda lab=lab, c=c: eval_row(lab, "GPT-FT-2",
                                              self._stage2_job(scenario, base_job, target, c), c)))
        if self.plan.direct_control:
            lab = f"{target}/GPT-FT-3"
            rows.append(self._guarded(
                experiment, lab, "GPT-FT-3",
                lambda: eval_row(lab, "GPT-FT-3", self.run_direct(target, scenario),
                                 self.plan.direct_train)))
        return rows
