"""Desk-scale policies: whole-completion categoricals per prompt."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Protocol

import numpy as np
from scipy.special import logsumexp

NORMALIZATION_TOL = 1e-9


class Policy(Protocol):
    def log_probs(self) -> np.ndarray:
        """[prompt x completion] matrix of log-probabilities."""
        ...


@dataclass
class ToyPolicy:
    logits: np.ndarray

    def __post_init__(self):
        self.logits = np.array(self.logits, dtype=float)
        if self.logits.ndim != 2 or 0 in self.logits.shape:
            raise ValueError(f"logits must be a non-empty prompt x completion matrix, got shape {self.logits.shape}")
        if not np.all(np.isfinite(self.logits)):
            raise ValueError("logits must be finite")

    @property
    def shape(self) -> tuple[int, int]:
        return self.logits.shape

    def log_probs(self) -> np.ndarray:
        return self.logits - logsumexp(self.logits, axis=1, keepdims=True)

    def log_prob(self, prompt: int, completion: int) -> float:
        return float(self.log_probs()[prompt, completion])

    def copy(self) -> "ToyPolicy":
        return ToyPolicy(self.logits.copy())

    @classmethod
    def uniform(cls, n_prompts: int, n_completions: int) -> "ToyPolicy":
        return cls(np.zeros((n_prompts, n_completions)))

    @classmethod
    def random(cls, rng: np.random.Generator, n_prompts: int, n_completions: int, scale: float = 1.0) -> "ToyPolicy":
        return cls(rng.normal(0.0, scale, size=(n_prompts, n_completions)))


@dataclass
class LogProbTable:
    """Fixed log-probabilities; zero-probability completions (``-inf``) are allowed."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.array(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("log-prob table must be two-dimensional")
        if np.any(np.isnan(self.values)) or np.any(self.values == np.inf):
            raise ValueError("log-probs must be real or -inf")
        totals = logsumexp(self.values, axis=1)
        if not np.allclose(totals, 0.0, atol=NORMALIZATION_TOL):
            raise ValueError("each row of the log-prob table must normalize to probability 1")

    def log_probs(self) -> np.ndarray:
        return self.values


@dataclass(frozen=True)
class ToyPairs:
    """Preference pairs over a toy support: chosen and rejected completion ids per prompt."""

    prompt: np.ndarray
    chosen: np.ndarray
    rejected: np.ndarray

    def __post_init__(self):
        arrays = [np.asarray(a, dtype=np.int64) for a in (self.prompt, self.chosen, self.rejected)]
        if len({a.shape for a in arrays}) != 1 or arrays[0].ndim != 1 or arrays[0].size == 0:
            raise ValueError("prompt, chosen and rejected must be equal-length non-empty vectors")
        if np.any(arrays[1] == arrays[2]):
            raise ValueError("a pair cannot prefer a completion over itself")
        for name, array in zip(("prompt", "chosen", "rejected"), arrays):
            object.__setattr__(self, name, array)

    def __len__(self) -> int:
        return int(self.prompt.size)

    @classmethod
    def from_tuples(cls, triples: Iterable[tuple[int, int, int]]) -> "ToyPairs":
        triples = list(triples)
        if not triples:
            raise ValueError("at least one pair is required")
        prompt, chosen, rejected = zip(*triples)
        return cls(np.array(prompt), np.array(chosen), np.array(rejected))

    def permuted(self, order: np.ndarray) -> "ToyPairs":
        return ToyPairs(self.prompt[order], self.chosen[order], self.rejected[order])

    def check_support(self, shape: tuple[int, int]):
        n_prompts, n_completions = shape
        if self.prompt.max() >= n_prompts or self.prompt.min() < 0:
            raise ValueError("pair prompt id outside the policy's prompts")
        for ids in (self.chosen, self.rejected):
            if ids.max() >= n_completions or ids.min() < 0:
                raise ValueError("pair completion id outside the policy's support")


def separable_pairs(n_prompts: int = 5, n_completions: int = 5) -> ToyPairs:
    """Completion 0 beats every other completion of each prompt."""
    return ToyPairs.from_tuples(
        (x, 0, loser) for x in range(n_prompts) for loser in range(1, n_completions)
    )


def contradictory_pairs(n_prompts: int = 1) -> ToyPairs:
    """(0 over 1) and (1 over 0) for every prompt."""
    return ToyPairs.from_tuples(
        triple for x in range(n_prompts) for triple in ((x, 0, 1), (x, 1, 0))
    )
