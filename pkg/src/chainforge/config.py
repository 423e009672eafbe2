"""Run configuration: JSON file -> frozen dataclasses, with CLI overrides applied first."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

from chainforge.agent.backend import BackendConfig
from chainforge.agent.problems import DEFAULT_N_MAX
from chainforge.dataset.split import DEFAULT_TRAIN_FOL, DEFAULT_TRAIN_GSM8K, SplitSpec
from chainforge.errors import ConfigError
from chainforge.manifest import config_hash
from chainforge.modeling.dpo import DpoConfig

BACKENDS = ("mock", "http")


def _build(cls, data: Optional[dict], section: str):
    data = dict(data or {})
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in '{section}': {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"invalid '{section}' section: {exc}") from exc


@dataclass(frozen=True)
class MockRates:
    error_rate: float = 0.0
    premature_stop_rate: float = 0.0


@dataclass(frozen=True)
class BackendSection:
    kind: str = "mock"
    http: BackendConfig = field(default_factory=BackendConfig)
    mock: MockRates = field(default_factory=MockRates)

    def __post_init__(self):
        if self.kind not in BACKENDS:
            raise ConfigError(f"backend.kind must be one of {BACKENDS}, got {self.kind!r}")


@dataclass(frozen=True)
class GenerationConfig:
    n_c: int = 100
    n_max: tuple[int, ...] = DEFAULT_N_MAX
    workers: int = 4
    max_attempts_factor: int = 3

    def __post_init__(self):
        object.__setattr__(self, "n_max", tuple(sorted(set(int(n) for n in self.n_max))))
        if self.n_c < 1:
            raise ConfigError("generation.n_c must be >= 1")
        if not self.n_max or min(self.n_max) < 1:
            raise ConfigError("generation.n_max needs at least one positive cap")
        if self.workers < 1 or self.max_attempts_factor < 1:
            raise ConfigError("generation.workers and generation.max_attempts_factor must be >= 1")


@dataclass(frozen=True)
class SamplingConfig:
    n_s: int = 40000
    replacement: bool = False


@dataclass(frozen=True)
class SplitConfig:
    train_fol: tuple[int, ...] = DEFAULT_TRAIN_FOL
    train_gsm8k: tuple[int, ...] = DEFAULT_TRAIN_GSM8K

    def spec(self) -> SplitSpec:
        return SplitSpec.from_train(self.train_fol, self.train_gsm8k)


@dataclass(frozen=True)
class DpoSettings:
    beta: float = 0.1
    learning_rate: float = 100.0
    steps: int = 500
    toy_prompts: int = 5
    toy_completions: int = 5

    def core(self) -> DpoConfig:
        return DpoConfig(self.beta, self.learning_rate, self.steps)


@dataclass(frozen=True)
class EvaluationConfig:
    dataset_a: Optional[str] = None
    dataset_b: Optional[str] = None
    alpha: float = 0.05

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ConfigError(f"evaluation.alpha must lie in (0, 1), got {self.alpha}")


@dataclass(frozen=True)
class Seeds:
    generate: int
    sample: int
    dpo: int

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"seeds.{f.name} must be an integer, got {value!r}")


@dataclass(frozen=True)
class RunConfig:
    problems: Path
    facts: Path
    output_root: Path
    backend: BackendSection
    generation: GenerationConfig
    sampling: SamplingConfig
    split: SplitConfig
    dpo: DpoSettings
    evaluation: EvaluationConfig
    seeds: Seeds
    reference_training: dict = field(default_factory=dict)  # documented LLM recipe, never read by a stage
    raw: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def hash(self) -> str:
        return config_hash(self.raw)

    def stage_dir(self, stage: str) -> Path:
        return self.output_root / stage

    @property
    def dataset_dir(self) -> Path:
        return self.stage_dir("dataset")

    def evaluation_dirs(self) -> tuple[Path, Path]:
        a = Path(self.evaluation.dataset_a) if self.evaluation.dataset_a else self.dataset_dir
        if not self.evaluation.dataset_b:
            raise ConfigError("evaluation.dataset_b is required to compare two models")
        return a, Path(self.evaluation.dataset_b)


# -----------------------
# Loading and overrides
# -----------------------
def parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict, overrides: dict[str, Any]) -> dict:
    """Set dotted keys (``generation.n_c``) on a copy of the raw config."""
    resolved = copy.deepcopy(raw)
    for dotted, value in overrides.items():
        node = resolved
        *parents, leaf = dotted.split(".")
        for key in parents:
            child = node.setdefault(key, {})
            if not isinstance(child, dict):
                raise ConfigError(f"cannot override '{dotted}': '{key}' is not a section")
            node = child
        node[leaf] = value
    return resolved


def from_dict(raw: dict, check_paths: bool = True) -> RunConfig:
    required = ("problems", "facts", "output_root", "seeds")
    missing = [key for key in required if key not in raw]
    if missing:
        raise ConfigError(f"config is missing {missing}; seeds are never implicit")
    known = {f.name for f in fields(RunConfig)} - {"raw"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")

    backend_raw = dict(raw.get("backend") or {})
    backend = BackendSection(
        kind=backend_raw.pop("kind", "mock"),
        http=_build(BackendConfig, backend_raw.pop("http", None), "backend.http"),
        mock=_build(MockRates, backend_raw.pop("mock", None), "backend.mock"),
    )
    if backend_raw:
        raise ConfigError(f"unknown keys in 'backend': {sorted(backend_raw)}")

    generation_raw = dict(raw.get("generation") or {})
    if "n_max" in generation_raw:
        generation_raw["n_max"] = tuple(generation_raw["n_max"])
    split_raw = {k: tuple(v) for k, v in (raw.get("split") or {}).items()}

    cfg = RunConfig(
        problems=Path(raw["problems"]),
        facts=Path(raw["facts"]),
        output_root=Path(raw["output_root"]),
        backend=backend,
        generation=_build(GenerationConfig, generation_raw, "generation"),
        sampling=_build(SamplingConfig, raw.get("sampling"), "sampling"),
        split=_build(SplitConfig, split_raw, "split"),
        dpo=_build(DpoSettings, raw.get("dpo"), "dpo"),
        evaluation=_build(EvaluationConfig, raw.get("evaluation"), "evaluation"),
        seeds=_build(Seeds, raw["seeds"], "seeds"),
        reference_training=dict(raw.get("reference_training") or {}),
        raw=raw,
    )
    cfg.dpo.core()
    cfg.split.spec()

    if check_paths:
        for name in ("problems", "facts"):
            path = getattr(cfg, name)
            if not path.exists():
                raise ConfigError(f"{name} file not found: {path}")
    return cfg


def load_config(path: Path, overrides: Optional[dict[str, Any]] = None, check_paths: bool = True) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path} must hold a JSON object")
    return from_dict(apply_overrides(raw, overrides or {}), check_paths=check_paths)
