"""Run configuration file (YAML or JSON).

Schema, version 1; only ``seed`` is required::

    version: 1
    seed: 7
    prepared: data/prepared.jsonl
    out_dir: runs/exp1
    preset: scenario7            # or a full `scenario:` mapping
    scenario: {label: custom, n_samples: 256, advanced_prompt: true, ...}
    backend:
      kind: echo                 # echo | interp | remote
      base_model: gpt-3.5-turbo
      credentials_env: OPENAI_API_KEY
      base_url: https://api.openai.com/v1
      max_in_flight: 4
    hyperparams: {n_epochs: 3}   # passed through to the provider
    plan:
      stage1_users: [user0, ..., user9]
      stage2_targets: [user10]
      stage2_sample_counts: [10, 20, 30, 40, 50]
      direct_control: true
    cost: {price_per_million_tokens: 8.0, epochs: 3, chars_per_token: 3.5}
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .backend import BackendHandle
from .costing import CostModel
from .errors import LoadpatchError
from .orchestrator import PRESETS, ScenarioConfig

CONFIG_VERSION = 1


class ConfigError(LoadpatchError, ValueError):
    pass


@dataclass
class RunConfig:
    seed: int
    prepared: str | None = None
    out_dir: str | None = None
    backend: BackendHandle = field(default_factory=lambda: BackendHandle("echo_stub"))
    scenario: ScenarioConfig = field(default_factory=lambda: PRESETS["scenario7"])
    plan: dict = field(default_factory=dict)
    cost: CostModel = field(default_factory=CostModel)
    hyperparams: dict | None = None

    def check_output_dir(self) -> Path:
        if not self.out_dir:
            raise ConfigError("no output directory configured")
        path = Path(self.out_dir)
        try:
            path.mkdir(parents=True, exist_ok=True)
            probe = path / ".write-test"
            probe.write_text("")
            probe.unlink()
        except OSError as exc:
            raise ConfigError(f"output directory {path} is not writable: {exc}") from exc
        return path


def _backend(spec) -> BackendHandle:
    if spec is None:
        return BackendHandle("echo_stub")
    if isinstance(spec, str):
        return BackendHandle(spec)
    spec = dict(spec)
    kw = {"kind": spec.pop("kind", "echo")}
    if "base_model" in spec:
        kw["base_model_id"] = spec.pop("base_model")
    for name in ("credentials_env", "base_url", "max_in_flight"):
        if name in spec:
            kw[name] = spec.pop(name)
    if spec:
        raise ConfigError(f"unknown backend key(s): {', '.join(sorted(spec))}")
    return BackendHandle(**kw)


def scenario_from(preset: str | None, custom: dict | None) -> ScenarioConfig:
    if custom:
        try:
            return ScenarioConfig(**custom)
        except TypeError as exc:
            raise ConfigError(f"bad scenario: {exc}") from None
    preset = preset or "scenario7"
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r} (choose from {', '.join(PRESETS)})")
    return PRESETS[preset]


def parse_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    version = data.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version}")
    if "seed" not in data:
        raise ConfigError("config must set 'seed'")
    known = {"version", "seed", "prepared", "out_dir", "preset", "scenario", "backend",
             "hyperparams", "plan", "cost"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    try:
        backend = _backend(data.get("backend"))
        cost = CostModel(**(data.get("cost") or {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(
        seed=int(data["seed"]),
        prepared=data.get("prepared"),
        out_dir=data.get("out_dir"),
        backend=backend,
        scenario=scenario_from(data.get("preset"), data.get("scenario")),
        plan=dict(data.get("plan") or {}),
        cost=cost,
        hyperparams=data.get("hyperparams"),
    )


def load_config(path) -> RunConfig:
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)  # JSON is a subset of YAML
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(data or {})
