"""Train/test partition keyed on problem identity, plus the sample-count tables."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable

import pandas as pd

from chainforge.agent.problems import Task
from chainforge.errors import SplitSpecError

logger = logging.getLogger(__name__)

DEFAULT_TRAIN_FOL = (0, 1, 2, 3)
DEFAULT_TRAIN_GSM8K = (0, 1, 2, 3, 4)

ProblemKey = tuple[int, int]  # (i_t, i_p)


def all_problem_keys() -> frozenset[ProblemKey]:
    return frozenset((task.index, i_p) for task in Task for i_p in range(task.problem_count))


@dataclass(frozen=True)
class SplitSpec:
    train: frozenset[ProblemKey]
    test: frozenset[ProblemKey]

    def __post_init__(self):
        universe = all_problem_keys()
        unknown = (self.train | self.test) - universe
        if unknown:
            raise SplitSpecError(f"split names problems that do not exist: {_describe(unknown)}")
        overlap = self.train & self.test
        if overlap:
            raise SplitSpecError(f"problems assigned to both train and test: {_describe(overlap)}")
        uncovered = universe - self.train - self.test
        if uncovered:
            raise SplitSpecError(f"problems assigned to neither side: {_describe(uncovered)}")

    @classmethod
    def from_train(cls, train_fol: Iterable[int] = DEFAULT_TRAIN_FOL,
                   train_gsm8k: Iterable[int] = DEFAULT_TRAIN_GSM8K) -> "SplitSpec":
        train = frozenset(
            [(Task.FOL.index, i_p) for i_p in train_fol] + [(Task.GSM8K.index, i_p) for i_p in train_gsm8k]
        )
        return cls(train=train, test=all_problem_keys() - train)

    def side(self, i_t: int, i_p: int) -> str:
        return "train" if (i_t, i_p) in self.train else "test"


def _describe(keys: Iterable[ProblemKey]) -> str:
    return ", ".join(f"{Task.from_index(i_t).label} {i_p}" for i_t, i_p in sorted(keys))


def split(pairs: pd.DataFrame, spec: SplitSpec) -> tuple[pd.DataFrame, pd.DataFrame]:
    keys = list(zip(pairs["i_t"], pairs["i_p"]))
    stray = {key for key in keys if key not in spec.train and key not in spec.test}
    if stray:
        raise SplitSpecError(f"pairs reference problems outside the split: {_describe(stray)}")

    in_train = pd.Series([key in spec.train for key in keys], index=pairs.index, dtype=bool)
    train = pairs[in_train].reset_index(drop=True)
    test = pairs[~in_train].reset_index(drop=True)
    if test.empty:
        logger.warning("Test split is empty: every sampled pair belongs to a training problem")
    if train.empty:
        logger.warning("Training split is empty")
    return train, test


# -----------------------
# Sample-count tables
# -----------------------
def count_totals(train: pd.DataFrame, test: pd.DataFrame) -> pd.DataFrame:
    rows = {}
    for name, part in (("Training set", train), ("Test set", test)):
        per_task = part.groupby("i_t").size()
        fol = int(per_task.get(Task.FOL.index, 0))
        gsm = int(per_task.get(Task.GSM8K.index, 0))
        rows[name] = {"FOL": fol, "GSM8K": gsm, "overall": fol + gsm}
    return pd.DataFrame.from_dict(rows, orient="index")


def count_per_problem(train: pd.DataFrame, test: pd.DataFrame, spec: SplitSpec) -> pd.DataFrame:
    """Pair counts per i_p; a problem on the other side of the split shows ``-``."""
    sides = {"train": train.groupby(["i_t", "i_p"]).size(), "test": test.groupby(["i_t", "i_p"]).size()}
    columns = [
        ("Train (FOL)", Task.FOL, "train"), ("Test (FOL)", Task.FOL, "test"),
        ("Train (GSM8K)", Task.GSM8K, "train"), ("Test (GSM8K)", Task.GSM8K, "test"),
    ]
    n_rows = max(task.problem_count for task in Task)

    table = {}
    for title, task, side in columns:
        cells = []
        for i_p in range(n_rows):
            if i_p >= task.problem_count or spec.side(task.index, i_p) != side:
                cells.append("-")
            else:
                cells.append(int(sides[side].get((task.index, i_p), 0)))
        cells.append(sum(c for c in cells if c != "-"))
        table[title] = cells
    return pd.DataFrame(table, index=[*range(n_rows), "tot."])


def render_counts(totals: pd.DataFrame, per_problem: pd.DataFrame) -> str:
    return (
        "Sample count per task\n"
        f"{totals.to_string()}\n\n"
        "Sample count per problem\n"
        f"{per_problem.rename_axis('i_p').to_string()}\n"
    )


def counts_to_json(totals: pd.DataFrame, per_problem: pd.DataFrame) -> dict:
    return {
        "totals": {row: {k: int(v) for k, v in values.items()} for row, values in totals.to_dict("index").items()},
        "per_problem": {
            str(i_p): {k: (None if v == "-" else int(v)) for k, v in values.items()}
            for i_p, values in per_problem.to_dict("index").items()
        },
    }
