"""Numerical checks for the DPO objective, and the suites behind ``chainforge dpo-check``."""

from __future__ import annotations

import logging
import math
from typing import Callable

import numpy as np
import pandas as pd

from chainforge.modeling.dpo import DpoConfig, dpo_gradient, dpo_loss, margins, toy_train
from chainforge.modeling.toy_policy import ToyPairs, ToyPolicy, separable_pairs

logger = logging.getLogger(__name__)

FD_STEP = 1e-6
GRADIENT_TOL = 1e-5
IDENTITY_TOL = 1e-12


def finite_difference_gradient(fn: Callable[[np.ndarray], float], x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central differences of a scalar function, one coordinate at a time."""
    x = np.array(x, dtype=float)
    grad = np.zeros_like(x)
    for index in np.ndindex(x.shape):
        original = x[index]
        x[index] = original + step
        upper = fn(x)
        x[index] = original - step
        lower = fn(x)
        x[index] = original
        grad[index] = (upper - lower) / (2 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest absolute disagreement, scaled by the largest gradient component."""
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-12)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def random_instance(rng: np.random.Generator, n_prompts: int = 3, n_completions: int = 4, n_pairs: int = 8):
    prompt = rng.integers(0, n_prompts, size=n_pairs)
    chosen = rng.integers(0, n_completions, size=n_pairs)
    rejected = (chosen + rng.integers(1, n_completions, size=n_pairs)) % n_completions
    pairs = ToyPairs(prompt, chosen, rejected)
    policy = ToyPolicy.random(rng, n_prompts, n_completions, scale=1.5)
    reference = ToyPolicy.random(rng, n_prompts, n_completions, scale=1.5)
    beta = float(rng.uniform(0.05, 2.0))
    return pairs, policy, reference, beta


def gradient_check(pairs: ToyPairs, policy: ToyPolicy, reference: ToyPolicy, beta: float) -> float:
    analytic = dpo_gradient(pairs, policy, reference, beta)
    numeric = finite_difference_gradient(
        lambda logits: dpo_loss(pairs, ToyPolicy(logits), reference, beta), policy.logits
    )
    return relative_error(analytic, numeric)


# -----------------------
# dpo-check suites
# -----------------------
def identity_suite(rng: np.random.Generator, batches: int = 100) -> dict:
    worst = 0.0
    for _ in range(batches):
        pairs, policy, _, beta = random_instance(rng, n_pairs=int(rng.integers(1, 32)))
        worst = max(worst, abs(dpo_loss(pairs, policy, policy, beta) - math.log(2)))
    return {"batches": batches, "max_abs_error": worst, "passed": worst <= IDENTITY_TOL}


def gradient_suite(rng: np.random.Generator, instances: int = 50) -> dict:
    errors = [gradient_check(*random_instance(rng)) for _ in range(instances)]
    worst = max(errors)
    return {"instances": instances, "max_relative_error": worst, "passed": worst < GRADIENT_TOL}


def training_suite(rng: np.random.Generator, cfg: DpoConfig, n_prompts: int = 5,
                   n_completions: int = 5) -> tuple[dict, pd.DataFrame]:
    pairs = separable_pairs(n_prompts, n_completions)
    reference = ToyPolicy.random(rng, n_prompts, n_completions)
    policy, history = toy_train(pairs, reference, cfg)

    improved = margins(pairs, policy) > margins(pairs, reference)
    summary = {
        "pairs": len(pairs),
        "steps": cfg.steps,
        "initial_loss": float(history.loss.iloc[0]),
        "final_loss": float(history.loss.iloc[-1]),
        "improved_margin_fraction": float(improved.mean()),
    }
    summary["passed"] = (
        summary["final_loss"] < 0.1
        and summary["final_loss"] <= summary["initial_loss"]
        and summary["improved_margin_fraction"] >= 0.95
    )
    return summary, history


def run_checks(seed: int, cfg: DpoConfig, n_prompts: int = 5, n_completions: int = 5) -> tuple[dict, pd.DataFrame]:
    rng = np.random.default_rng(seed)
    report = {"seed": seed, "beta": cfg.beta}

    logger.info("☼ Step 1/3: Identity anchor...")
    report["identity"] = identity_suite(rng)
    logger.info("☼ Step 2/3: Gradient vs central differences...")
    report["gradient"] = gradient_suite(rng)
    logger.info("☼ Step 3/3: Toy preference training...")
    report["training"], history = training_suite(rng, cfg, n_prompts, n_completions)

    report["passed"] = all(report[name]["passed"] for name in ("identity", "gradient", "training"))
    return report, history
