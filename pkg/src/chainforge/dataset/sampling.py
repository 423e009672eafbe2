from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from chainforge.errors import ConfigError, SamplingCapacityError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SamplePlan:
    n_s: int
    seed: int
    replacement: bool = False

    def __post_init__(self):
        if self.n_s < 1:
            raise ConfigError(f"n_s must be >= 1, got {self.n_s}")


def sample_pairs(pairs: pd.DataFrame, plan: SamplePlan) -> pd.DataFrame:
    """Uniform draw of ``plan.n_s`` pairs; rows come back in pair order."""
    if not plan.replacement and plan.n_s > len(pairs):
        raise SamplingCapacityError(
            f"n_s={plan.n_s} exceeds |D^a|={len(pairs)}; lower n_s or enable replacement"
        )
    if len(pairs) == 0:
        raise SamplingCapacityError("cannot sample from an empty pair set")

    rng = np.random.default_rng(plan.seed)
    picked = np.sort(rng.choice(len(pairs), size=plan.n_s, replace=plan.replacement))
    logger.info("Sampled %d of %d pairs (replacement=%s)", plan.n_s, len(pairs), plan.replacement)
    return pairs.iloc[picked].reset_index(drop=True)
