"""Accuracy grid and Wilcoxon table for an original vs fine-tuned comparison."""

from __future__ import annotations

import logging
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from chainforge.errors import DegenerateInputError, MismatchedProblemsError, ScoreError
from chainforge.evaluation.metrics import (
    DATASET_SCOPES,
    SCORE_KEY,
    TASK_SCOPES,
    Scope,
    aggregate,
    paired_accuracies,
    percent,
)
from chainforge.evaluation.wilcoxon import wilcoxon_signed_rank

logger = logging.getLogger(__name__)

MODELS = ("original", "fine-tuned")
TASK_TITLES = {"FOL": "FOL", "GSM8K": "GSM8K", "overall": "Overall"}


def combine_scores(original: pd.DataFrame, finetuned: pd.DataFrame) -> pd.DataFrame:
    keys_a = set(map(tuple, original[SCORE_KEY].to_numpy().tolist()))
    keys_b = set(map(tuple, finetuned[SCORE_KEY].to_numpy().tolist()))
    if keys_a != keys_b:
        raise MismatchedProblemsError(
            f"the two models were scored on different problems ({len(keys_a ^ keys_b)} differ)"
        )
    frames = [df.assign(model=model) for model, df in zip(MODELS, (original, finetuned))]
    combined = pd.concat(frames, ignore_index=True)
    return combined.sort_values(["model", *SCORE_KEY], key=lambda c: c.map(MODELS.index) if c.name == "model" else c)


def _model_scores(scores: pd.DataFrame, model: str) -> pd.DataFrame:
    return scores[scores["model"] == model]


def wilcoxon_table(scores: pd.DataFrame, alpha: float = 0.05) -> dict:
    """One test per task and overall, pairing problems x n_max; degenerate inputs are flagged."""
    original, finetuned = (_model_scores(scores, m) for m in MODELS)
    table = {}
    for task in TASK_SCOPES:
        paired = paired_accuracies(original, finetuned, task=task)
        try:
            table[TASK_TITLES[task]] = {"degenerate": False, **wilcoxon_signed_rank(paired, alpha).to_dict()}
        except DegenerateInputError as exc:
            logger.warning("Wilcoxon test for %s is degenerate: %s", TASK_TITLES[task], exc)
            table[TASK_TITLES[task]] = {"degenerate": True, "n_pairs": len(paired), "alpha": alpha, "reason": str(exc)}
    return table


def accuracy_grid(scores: pd.DataFrame, n_max: Optional[int]) -> pd.DataFrame:
    rows = []
    for model in MODELS:
        model_scores = _model_scores(scores, model)
        for dataset, title in DATASET_SCOPES.items():
            row = {"Model": model, "Dataset": title}
            for task in TASK_SCOPES:
                try:
                    row[TASK_TITLES[task]] = aggregate(model_scores, Scope(task, dataset, n_max)).value
                except ScoreError:
                    row[TASK_TITLES[task]] = np.nan
            rows.append(row)
    return pd.DataFrame(rows, columns=["Model", "Dataset", *TASK_TITLES.values()])


def _scope_title(n_max: Optional[int], caps: Sequence[int]) -> str:
    if n_max is not None:
        return f"n_max={n_max}"
    return "n_max=" + " and ".join(str(c) for c in caps)


def _format_grid(grid: pd.DataFrame) -> str:
    shown = grid.copy()
    for column in TASK_TITLES.values():
        shown[column] = [("-" if np.isnan(v) else percent(v)) for v in grid[column]]
    return shown.to_string(index=False)


def _format_wilcoxon(table: dict, alpha: float) -> str:
    rows = []
    for dataset, result in table.items():
        if result["degenerate"]:
            rows.append({"Dataset": dataset, "W": "-", "W+": "-", "W-": "-", "n": 0,
                         "p-value": "degenerate", "significant": "-"})
            continue
        rows.append({
            "Dataset": dataset,
            "W": f"{result['W']:g}",
            "W+": f"{result['W_plus']:g}",
            "W-": f"{result['W_minus']:g}",
            "n": result["n_effective"],
            "p-value": f"{result['p']:.2e}",
            "significant": "yes" if result["significant"] else "no",
        })
    return f"Wilcoxon signed-rank test (alpha={alpha:g})\n" + pd.DataFrame(rows).to_string(index=False)


def render_report(scores: pd.DataFrame, alpha: float = 0.05) -> tuple[str, dict]:
    """Plain-text and JSON renderings of the accuracy grids and the Wilcoxon table.

    ``scores`` is the output of ``combine_scores``: per-problem accuracies of
    both models, tagged with model, split side and n_max.
    """
    if set(scores["model"].unique()) != set(MODELS):
        raise MismatchedProblemsError(f"report needs scores for exactly {MODELS}")
    combine_scores(_model_scores(scores, MODELS[0]).drop(columns="model"),
                   _model_scores(scores, MODELS[1]).drop(columns="model"))

    caps = sorted(int(c) for c in scores["n_max"].unique())
    sections, grids = [], {}
    for n_max in [*caps, None]:
        title = _scope_title(n_max, caps)
        grid = accuracy_grid(scores, n_max)
        sections.append(f"Task average percentage accuracy ({title})\n{_format_grid(grid)}")
        grids[title] = [
            {k: (None if isinstance(v, float) and np.isnan(v) else v) for k, v in row.items()}
            for row in grid.to_dict("records")
        ]

    wilcoxon = wilcoxon_table(scores, alpha)
    sections.append(_format_wilcoxon(wilcoxon, alpha))
    text = "\n\n".join(sections) + "\n"
    return text, {"alpha": alpha, "accuracy": grids, "wilcoxon": wilcoxon}
