"""Wilcoxon signed-rank test on paired accuracies.

Zero differences are dropped, tied magnitudes share their average rank and
the reported statistic is ``W = min(W+, W-)``. The two-sided p-value is the
share of the 2^n sign assignments whose statistic is at most the observed
one; it is counted exactly for n <= 20 and taken from the normal
approximation (tie and continuity corrected) above that.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Literal

import numpy as np
import scipy.stats

from chainforge.errors import DegenerateInputError, ScoreError

EXACT_LIMIT = 20
DECIMALS = 12

Method = Literal["auto", "exact", "normal"]


@dataclass(frozen=True)
class WilcoxonResult:
    W: float
    W_plus: float
    W_minus: float
    p: float
    n_effective: int
    alpha: float = 0.05
    method: str = "exact"

    @property
    def significant(self) -> bool:
        return self.p < self.alpha

    def to_dict(self) -> dict:
        return {
            "W": self.W,
            "W_plus": self.W_plus,
            "W_minus": self.W_minus,
            "p": self.p,
            "n_effective": self.n_effective,
            "alpha": self.alpha,
            "method": self.method,
            "significant": self.significant,
        }


def signed_differences(paired: Iterable[tuple[float, float]]) -> np.ndarray:
    """``a_finetuned - a_original`` per pair, rounded so float noise never creates a rank."""
    values = np.array(list(paired), dtype=float).reshape(-1, 2)
    if not np.all(np.isfinite(values)):
        raise ScoreError("paired accuracies must be finite")
    return np.round(values[:, 1] - values[:, 0], DECIMALS)


def subset_sum_counts(doubled_ranks: np.ndarray) -> list[int]:
    """counts[s] = number of sign assignments whose positive doubled ranks sum to s."""
    total = int(doubled_ranks.sum())
    counts = [0] * (total + 1)
    counts[0] = 1
    reached = 0
    for rank in doubled_ranks.astype(int):
        for s in range(reached, -1, -1):
            if counts[s]:
                counts[s + rank] += counts[s]
        reached += rank
    return counts


def exact_p_value(ranks: np.ndarray, statistic: float) -> float:
    # average ranks are multiples of 1/2, so doubling makes every sum an integer
    doubled = np.rint(2 * ranks).astype(int)
    total = int(doubled.sum())
    observed = int(round(2 * statistic))
    counts = subset_sum_counts(doubled)
    extreme = sum(c for s, c in enumerate(counts) if min(s, total - s) <= observed)
    return min(1.0, extreme / 2 ** len(ranks))


def normal_p_value(ranks: np.ndarray, statistic: float) -> float:
    n = len(ranks)
    mean = n * (n + 1) / 4
    _, ties = np.unique(ranks, return_counts=True)
    variance = n * (n + 1) * (2 * n + 1) / 24 - float(np.sum(ties**3 - ties)) / 48
    if variance <= 0:
        return 1.0
    z = min(0.0, (statistic - mean + 0.5) / np.sqrt(variance))
    return float(min(1.0, 2 * scipy.stats.norm.cdf(z)))


def wilcoxon_signed_rank(paired: Iterable[tuple[float, float]], alpha: float = 0.05,
                         method: Method = "auto") -> WilcoxonResult:
    """Compare ``(a_original, a_finetuned)`` pairs; W+ sums ranks where the second is higher."""
    if not 0 < alpha < 1:
        raise ScoreError(f"alpha must lie in (0, 1), got {alpha}")
    diffs = signed_differences(paired)
    if diffs.size == 0:
        raise DegenerateInputError("no paired scores to compare")
    diffs = diffs[diffs != 0]
    if diffs.size == 0:
        raise DegenerateInputError("every paired difference is zero; the test is undefined")

    ranks = scipy.stats.rankdata(np.abs(diffs))
    w_plus = float(ranks[diffs > 0].sum())
    w_minus = float(ranks[diffs < 0].sum())
    statistic = min(w_plus, w_minus)

    if method == "auto":
        method = "exact" if diffs.size <= EXACT_LIMIT else "normal"
    if method == "exact":
        p = exact_p_value(ranks, statistic)
    elif method == "normal":
        p = normal_p_value(ranks, statistic)
    else:
        raise ValueError(f"unknown method {method!r}")

    return WilcoxonResult(statistic, w_plus, w_minus, p, int(diffs.size), alpha, method)
