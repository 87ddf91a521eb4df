"""Chat-completion / fine-tuning backends.

``echo`` and ``interp`` are offline stubs. ``echo`` answers every test prompt
with the ground-truth profile of the day it was built from; ``interp`` fills
the masked window by linear interpolation between the last known value
before it and the first known value after it. Both re-render their answer in
the prompt's own format so the decode path is exercised.

``remote`` talks to an OpenAI-compatible HTTP API (``/files``,
``/fine_tuning/jobs``, ``/chat/completions``).
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from threading import Lock

import httpx

from . import costing
from .errors import (PreconditionError, ProviderError,
                     StorageError, StubLookupError)
from .preprocess import MaskedDay
from .promptset import (ASSISTANT, ChatSample, completion_for, dumps_sample,
                        prompt_load_values, read_dataset, validate_finetune_samples)
from .restorer import fill_linear

logger = logging.getLogger(__name__)

KINDS = ("remote", "echo_stub", "interp_stub")
KIND_ALIASES = {"echo": "echo_stub", "interp": "interp_stub", "remote": "remote"}
STAGE_NAMES = {"stage1": "GPT-FT-1", "stage2": "GPT-FT-2", "direct": "GPT-FT-3"}
DEFAULT_BASE_MODEL = "gpt-3.5-turbo"
DEFAULT_BASE_URL = "https://api.openai.com/v1"
JOBS_SCHEMA = "loadpatch.jobs"
JOBS_VERSION = 1
TERMINAL = {"succeeded", "failed", "cancelled"}


@dataclass(frozen=True)
class BackendHandle:
    kind: str
    base_model_id: str = DEFAULT_BASE_MODEL
    credentials_env: str | None = None  # remote only: env var holding the API key
    base_url: str = DEFAULT_BASE_URL
    max_in_flight: int = 4

    def __post_init__(self):
        kind = KIND_ALIASES.get(self.kind, self.kind)
        if kind not in KINDS:
            raise ValueError(f"unknown backend kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if kind != "remote" and self.credentials_env:
            raise ValueError("stub backends take no credentials")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")


@dataclass(frozen=True)
class FineTuneJob:
    job_id: str
    stage: str
    base_model_id: str
    dataset_path: str
    status: str = "pending"
    result_model_id: str | None = None
    trained_tokens: int | None = None
    label: str = ""
    error: str | None = None

    def __post_init__(self):
        if self.stage not in STAGE_NAMES:
            raise ValueError(f"unknown stage {self.stage!r}")
        if (self.status == "succeeded") != (self.result_model_id is not None):
            raise ValueError("result_model_id must be set exactly when status is succeeded")

    @property
    def model_name(self) -> str:
        return STAGE_NAMES[self.stage]


class JobStore:
    """Append-only job log. The last record written for a job id wins."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = Lock()

    def append(self, job: FineTuneJob) -> None:
        with self._lock:
            try:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                fresh = not self.path.exists() or self.path.stat().st_size == 0
                with self.path.open("a") as fh:
                    if fresh:
                        fh.write(json.dumps({"schema": JOBS_SCHEMA, "version": JOBS_VERSION}) + "\n")
                    fh.write(json.dumps(asdict(job)) + "\n")
            except OSError as exc:
                raise StorageError(f"cannot write job store {self.path}: {exc}") from exc

    def jobs(self) -> list[FineTuneJob]:
        if not self.path.exists():
            return []
        try:
            lines = self.path.read_text().splitlines()
        except OSError as exc:
            raise StorageError(f"cannot read job store {self.path}: {exc}") from exc
        if not lines:
            return []
        latest: dict[str, FineTuneJob] = {}
        try:
            header = json.loads(lines[0])
            if header.get("schema") != JOBS_SCHEMA:
                raise StorageError(f"{self.path}: not a job store")
            for line in lines[1:]:
                if line.strip():
                    job = FineTuneJob(**json.loads(line))
                    latest[job.job_id] = job
        except (json.JSONDecodeError, TypeError, ValueError) as exc:
            raise StorageError(f"{self.path}: corrupt job store ({exc})") from exc
        return list(latest.values())


def _check_prompt(prompt: ChatSample) -> None:
    if not prompt.messages or prompt.messages[-1].role == ASSISTANT:
        raise PreconditionError("prompt must end with a user message")


def _load_training_file(dataset_path) -> list[ChatSample]:
    samples = read_dataset(dataset_path)
    validate_finetune_samples(samples)
    return samples


class Backend:
    """Common surface. Subclasses implement ``submit_finetune`` and ``chat_complete``."""

    def __init__(self, handle: BackendHandle, store: JobStore | str | os.PathLike):
        self.handle = handle
        self.store = store if isinstance(store, JobStore) else JobStore(store)

    @property
    def kind(self) -> str:
        return self.handle.kind

    def register(self, days) -> None:
        """Make days known to the backend (used by stubs only)."""

    def list_jobs(self) -> list[FineTuneJob]:
        return self.store.jobs()

    def submit_finetune(self, dataset_path, hyperparams: dict | None = None, *,
                        stage: str = "stage1", base_model_id: str | None = None,
                        label: str = "") -> FineTuneJob:
        raise NotImplementedError

    def chat_complete(self, model_id: str, prompt: ChatSample) -> str:
        raise NotImplementedError

    def complete_many(self, model_id: str, prompts) -> list[str | Exception]:
        """Complete prompts with bounded parallelism; errors are returned in place."""
        def one(prompt):
            try:
                return self.chat_complete(model_id, prompt)
            except Exception as exc:  # recorded per sample by the caller
                return exc

        prompts = list(prompts)
        if self.handle.max_in_flight == 1 or len(prompts) <= 1:
            return [one(p) for p in prompts]
        with ThreadPoolExecutor(max_workers=self.handle.max_in_flight) as pool:
            return list(pool.map(one, prompts))


class StubBackend(Backend):
    def __init__(self, handle: BackendHandle, store, cost_model: costing.CostModel | None = None):
        if handle.kind == "remote":
            raise ValueError("StubBackend needs a stub kind")
        super().__init__(handle, store)
        self.cost_model = cost_model or costing.CostModel()
        self._days: dict[str, MaskedDay] = {}

    def register(self, days) -> None:
        for d in days:
            self._days[d.key] = d

    def submit_finetune(self, dataset_path, hyperparams=None, *, stage="stage1",
                        base_model_id=None, label=""):
        samples = _load_training_file(dataset_path)
        base = base_model_id or self.handle.base_model_id
        h = hashlib.sha256()
        h.update(self.kind.encode() + b"\0" + base.encode() + b"\0")
        h.update(Path(dataset_path).read_bytes())
        digest = h.hexdigest()[:12]
        epochs = int((hyperparams or {}).get("n_epochs", self.cost_model.epochs))
        tokens = costing.estimate_tokens(samples, "approximate", self.cost_model.chars_per_token) * epochs
        job = FineTuneJob(
            job_id=f"{self.kind}-{stage}-{digest}",
            stage=stage,
            base_model_id=base,
            dataset_path=str(dataset_path),
            status="succeeded",
            result_model_id=f"ft:{self.kind}:{STAGE_NAMES[stage]}:{digest}",
            trained_tokens=tokens,
            label=label,
        )
        self.store.append(job)
        return job

    def _day_for(self, prompt: ChatSample) -> MaskedDay:
        if prompt.day_ref is None or prompt.day_ref.key not in self._days:
            ref = prompt.day_ref.key if prompt.day_ref else None
            raise StubLookupError(f"no registered day for prompt (day_ref={ref})")
        return self._days[prompt.day_ref.key]

    def chat_complete(self, model_id: str, prompt: ChatSample) -> str:
        _check_prompt(prompt)
        day = self._day_for(prompt)
        if self.kind == "echo_stub":
            return completion_for(day.full_load_q(), prompt.variant)
        values = prompt_load_values(prompt)
        window = list(day.mask.positions())
        for i in window:
            values[i] = None
        return completion_for(fill_linear(values, window), prompt.variant)


class RemoteBackend(Backend):
    """OpenAI-compatible client. Retries 429/5xx/transport errors with capped,
    jittered exponential backoff, honouring ``Retry-After``."""

    max_attempts = 5
    backoff_base = 1.0
    backoff_cap = 30.0

    def __init__(self, handle: BackendHandle, store, client: httpx.Client | None = None,
                 sleep=time.sleep, poll_interval: float = 10.0, poll_cap: float = 120.0,
                 poll_timeout: float | None = None):
        if handle.kind != "remote":
            raise ValueError("RemoteBackend needs kind='remote'")
        super().__init__(handle, store)
        env = handle.credentials_env or "OPENAI_API_KEY"
        key = os.environ.get(env)
        if client is None:
            if not key:
                raise ProviderError(f"environment variable {env} is not set")
            client = httpx.Client(base_url=handle.base_url, timeout=120.0,
                                  headers={"Authorization": f"Bearer {key}"})
        self.client = client
        self.sleep = sleep
        self.poll_interval = poll_interval
        self.poll_cap = poll_cap
        self.poll_timeout = poll_timeout
        self._rng = random.Random()

    def _delay(self, attempt: int, response: httpx.Response | None) -> float:
        if response is not None:
            hint = response.headers.get("retry-after")
            if hint:
                try:
                    return min(float(hint), self.backoff_cap)
                except ValueError:
                    pass
        delay = min(self.backoff_cap, self.backoff_base * 2 ** attempt)
        return delay * (0.5 + 0.5 * self._rng.random())

    def _request(self, method: str, url: str, **kw) -> dict:
        last = None
        for attempt in range(self.max_attempts):
            response = None
            try:
                response = self.client.request(method, url, **kw)
            except httpx.TransportError as exc:
                last = f"transport error: {exc}"
            else:
                if response.status_code < 400:
                    return response.json()
                message = _error_message(response)
                if response.status_code != 429 and response.status_code < 500:
                    raise ProviderError(message, status=response.status_code)
                last = message
            if attempt + 1 < self.max_attempts:
                delay = self._delay(attempt, response)
                logger.warning("%s %s failed (%s); retrying in %.1fs", method, url, last, delay)
                self.sleep(delay)
        raise ProviderError(f"{method} {url} failed after {self.max_attempts} attempts: {last}")

    def submit_finetune(self, dataset_path, hyperparams=None, *, stage="stage1",
                        base_model_id=None, label=""):
        # validate locally before anything is uploaded
        samples = _load_training_file(dataset_path)
        payload = "".join(dumps_sample(s, with_meta=False) + "\n" for s in samples).encode()
        uploaded = self._request(
            "POST", "/files", data={"purpose": "fine-tune"},
            files={"file": (Path(dataset_path).name, payload, "application/jsonl")})
        base = base_model_id or self.handle.base_model_id
        body = {"training_file": uploaded["id"], "model": base}
        if hyperparams:
            body["hyperparameters"] = dict(hyperparams)
        if label:
            body["suffix"] = label[:18]
        created = self._request("POST", "/fine_tuning/jobs", json=body)
        job = FineTuneJob(created["id"], stage, base, str(dataset_path), "pending", label=label)
        self.store.append(job)
        return self._poll(job)

    def _poll(self, job: FineTuneJob) -> FineTuneJob:
        interval = self.poll_interval
        waited = 0.0
        while True:
            info = self._request("GET", f"/fine_tuning/jobs/{job.job_id}")
            status = info.get("status", "")
            if status in TERMINAL:
                if status == "succeeded":
                    job = replace(job, status="succeeded", result_model_id=info["fine_tuned_model"],
                                  trained_tokens=info.get("trained_tokens"))
                else:
                    err = info.get("error") or {}
                    job = replace(job, status="failed",
                                  error=err.get("message") if isinstance(err, dict) else str(err))
                self.store.append(job)
                if job.status == "failed":
                    raise ProviderError(f"fine-tuning job {job.job_id} {status}: {job.error}")
                return job
            if job.status != "running" and status in ("running", "validating_files", "queued"):
                job = replace(job, status="running")
                self.store.append(job)
            if self.poll_timeout is not None and waited >= self.poll_timeout:
                raise ProviderError(f"fine-tuning job {job.job_id} still {status} after {waited:.0f}s")
            self.sleep(interval)
            waited += interval
            interval = min(self.poll_cap, interval * 1.5)

    def chat_complete(self, model_id: str, prompt: ChatSample) -> str:
        _check_prompt(prompt)
        body = {"model": model_id,
                "messages": [{"role": m.role, "content": m.content} for m in prompt.messages],
                "temperature": 0}
        data = self._request("POST", "/chat/completions", json=body)
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise ProviderError(f"malformed chat completion response: {str(data)[:200]}") from None


def _error_message(response: httpx.Response) -> str:
    try:
        err = response.json().get("error")
        if isinstance(err, dict) and err.get("message"):
            return f"HTTP {response.status_code}: {err['message']}"
    except (ValueError, AttributeError):
        pass
    return f"HTTP {response.status_code}: {response.text[:200]}"


def make_backend(handle: BackendHandle, store, **kw) -> Backend:
    if handle.kind == "remote":
        return RemoteBackend(handle, store, **kw)
    return StubBackend(handle, store, **kw)
