"""Problem pack: the tasks a chain is asked to solve.

Index convention follows the dataset tree: ``i_t`` is 0 for GSM8K and 1
for FOL, ``i_n`` is the position of ``n_max`` among the configured caps and
``i_p`` numbers the problem inside its task.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

from chainforge.errors import ConfigError

DEFAULT_N_MAX = (10, 20)
UNTRACKED_FUNCTIONS = {"Reasoning", "Stop", "CheckCorrectChain"}


class Task(str, Enum):
    GSM8K = "gsm8k"
    FOL = "fol"

    @property
    def index(self) -> int:
        return 0 if self is Task.GSM8K else 1

    @property
    def label(self) -> str:
        return "GSM8K" if self is Task.GSM8K else "FOL"

    @property
    def problem_count(self) -> int:
        return 9 if self is Task.GSM8K else 6

    @classmethod
    def from_index(cls, i_t: int) -> "Task":
        return cls.GSM8K if i_t == 0 else cls.FOL


@dataclass(frozen=True, order=True)
class DatasetIndex:
    i_t: int
    i_n: int
    i_p: int

    def __post_init__(self):
        if self.i_t not in (0, 1):
            raise ValueError(f"i_t must be 0 or 1, got {self.i_t}")
        if self.i_n < 0:
            raise ValueError(f"i_n must be non-negative, got {self.i_n}")
        limit = Task.from_index(self.i_t).problem_count
        if not 0 <= self.i_p < limit:
            raise ValueError(f"i_p={self.i_p} outside 0..{limit - 1} for {Task.from_index(self.i_t).label}")

    @property
    def task(self) -> Task:
        return Task.from_index(self.i_t)


def n_max_index(n_max: int, n_max_values: Sequence[int] = DEFAULT_N_MAX) -> int:
    ordered = sorted(set(n_max_values))
    if n_max not in ordered:
        raise ConfigError(f"n_max={n_max} is not among the configured caps {ordered}")
    return ordered.index(n_max)


@dataclass(frozen=True)
class ExpectedCall:
    name: str
    args: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class ProblemSpec:
    task: Task
    i_p: int
    persona: str
    question: str
    functions: tuple[str, ...]
    expected_trace: Optional[tuple[ExpectedCall, ...]] = None
    gold_answer: Optional[Fraction] = None
    script: tuple[str, ...] = ()
    reconstruction: bool = True

    def __post_init__(self):
        DatasetIndex(self.task.index, 0, self.i_p)
        if self.task is Task.FOL:
            if not self.expected_trace or self.gold_answer is not None:
                raise ConfigError(f"{self.problem_id}: FOL problems need a non-empty expected trace only")
            bad = [c.name for c in self.expected_trace if c.name in UNTRACKED_FUNCTIONS]
            if bad:
                raise ConfigError(f"{self.problem_id}: expected trace cannot contain {bad}")
        else:
            if self.gold_answer is None or self.expected_trace is not None:
                raise ConfigError(f"{self.problem_id}: GSM8K problems need a gold answer only")

    @property
    def problem_id(self) -> str:
        return f"{self.task.value}/{self.i_p}"

    def index(self, n_max: int, n_max_values: Sequence[int] = DEFAULT_N_MAX) -> DatasetIndex:
        return DatasetIndex(self.task.index, n_max_index(n_max, n_max_values), self.i_p)


def _parse_problem(record: dict) -> ProblemSpec:
    task = Task(record["task"])
    trace = None
    if "expected_trace" in record:
        trace = tuple(
            ExpectedCall(step["name"], tuple((k, str(v)) for k, v in step.get("args", {}).items()))
            for step in record["expected_trace"]
        )
    gold = Fraction(str(record["gold_answer"])) if "gold_answer" in record else None
    return ProblemSpec(
        task=task,
        i_p=int(record["i_p"]),
        persona=record["persona"],
        question=record["question"],
        functions=tuple(record["functions"]),
        expected_trace=trace,
        gold_answer=gold,
        script=tuple(record.get("script", ())),
        reconstruction=bool(record.get("reconstruction", True)),
    )


def load_problem_pack(path: Path) -> list[ProblemSpec]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"problem pack not found: {path}")
    try:
        records = json.loads(path.read_text(encoding="utf-8"))
        problems = [_parse_problem(r) for r in records["problems"]]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid problem pack {path}: {exc}") from exc

    seen = set()
    for problem in problems:
        if problem.problem_id in seen:
            raise ConfigError(f"duplicate problem {problem.problem_id} in {path}")
        seen.add(problem.problem_id)
    return sorted(problems, key=lambda p: (p.task.index, p.i_p))
