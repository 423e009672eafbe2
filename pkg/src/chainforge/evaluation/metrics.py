from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import pandas as pd

from chainforge.agent.problems import DatasetIndex, Task
from chainforge.dataset.split import SplitSpec
from chainforge.dataset.store import load_manifest, prompt_counts
from chainforge.errors import MismatchedProblemsError, ScoreError

TASK_SCOPES = ("FOL", "GSM8K", "overall")
DATASET_SCOPES = {"train": "Training set", "test": "Test set", "whole": "Whole set"}
SCORE_KEY = ["i_t", "i_n", "i_p"]


@dataclass(frozen=True)
class ProblemScore:
    index: Optional[DatasetIndex]
    n_right: int
    n_wrong: int

    def __post_init__(self):
        if self.n_right < 0 or self.n_wrong < 0:
            raise ScoreError("completion counts cannot be negative")
        if self.n_right + self.n_wrong == 0:
            raise ScoreError("accuracy is undefined without completions")

    @property
    def accuracy(self) -> float:
        return self.n_right / (self.n_right + self.n_wrong)


def score_problem(n_right: int, n_wrong: int, index: Optional[DatasetIndex] = None) -> ProblemScore:
    return ProblemScore(index, n_right, n_wrong)


def score_dataset(dataset_dir: Path, spec: SplitSpec) -> pd.DataFrame:
    """Per-prompt accuracy of a generated dataset, tagged with its split side."""
    counts = prompt_counts(load_manifest(dataset_dir))
    counts["accuracy"] = [
        score_problem(r.n_right, r.n_wrong, DatasetIndex(r.i_t, r.i_n, r.i_p)).accuracy
        for r in counts.itertuples(index=False)
    ]
    counts["side"] = [spec.side(i_t, i_p) for i_t, i_p in zip(counts.i_t, counts.i_p)]
    return counts


@dataclass(frozen=True)
class Scope:
    task: str = "overall"
    dataset: str = "whole"
    n_max: Optional[int] = None  # None selects every cap

    def __post_init__(self):
        if self.task not in TASK_SCOPES:
            raise ScoreError(f"task scope must be one of {TASK_SCOPES}")
        if self.dataset not in DATASET_SCOPES:
            raise ScoreError(f"dataset scope must be one of {tuple(DATASET_SCOPES)}")


@dataclass(frozen=True)
class AggregateScore:
    scope: Scope
    value: float
    members: int


def select(scores: pd.DataFrame, scope: Scope) -> pd.DataFrame:
    mask = pd.Series(True, index=scores.index)
    if scope.task != "overall":
        mask &= scores["i_t"] == (Task.FOL.index if scope.task == "FOL" else Task.GSM8K.index)
    if scope.dataset != "whole":
        mask &= scores["side"] == scope.dataset
    if scope.n_max is not None:
        mask &= scores["n_max"] == scope.n_max
    return scores[mask]


def aggregate(scores: pd.DataFrame, scope: Scope) -> AggregateScore:
    """Unweighted mean of the selected per-problem accuracies."""
    chosen = select(scores, scope)
    if chosen.empty:
        raise ScoreError(f"no problem scores fall in scope {scope}")
    value = math.fsum(chosen["accuracy"].tolist()) / len(chosen)
    return AggregateScore(scope, value, len(chosen))


def paired_accuracies(original: pd.DataFrame, finetuned: pd.DataFrame, task: str = "overall",
                      n_max: Optional[int] = None) -> list[tuple[float, float]]:
    """(original, fine-tuned) accuracy per problem x n_max, in index order."""
    keys_a = set(map(tuple, original[SCORE_KEY].to_numpy().tolist()))
    keys_b = set(map(tuple, finetuned[SCORE_KEY].to_numpy().tolist()))
    if keys_a != keys_b:
        raise MismatchedProblemsError(
            f"datasets score different problems: only in A {sorted(keys_a - keys_b)}, "
            f"only in B {sorted(keys_b - keys_a)}"
        )

    scope = Scope(task=task, dataset="whole", n_max=n_max)
    merged = select(original, scope).merge(
        finetuned[SCORE_KEY + ["accuracy"]], on=SCORE_KEY, suffixes=("_a", "_b")
    ).sort_values(SCORE_KEY)
    return list(zip(merged["accuracy_a"], merged["accuracy_b"]))


def percent(value: float) -> str:
    return f"{value * 100:.2f}%"
