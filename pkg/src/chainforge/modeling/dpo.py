"""DPO objective over sequence-level log-probabilities.

    loss = -mean log sigmoid(beta * [(log pi(y_w) - log ref(y_w)) - (log pi(y_l) - log ref(y_l))])
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy.special import expit, log_expit

from chainforge.agent.transcript import ChatMessage
from chainforge.errors import ConfigError, DatasetIntegrityError, ReferenceSupportError, TrainingDivergedError
from chainforge.manifest import canonical_json
from chainforge.modeling.toy_policy import Policy, ToyPairs, ToyPolicy

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DpoConfig:
    beta: float = 0.1
    learning_rate: float = 100.0
    steps: int = 500

    def __post_init__(self):
        if not self.beta > 0:
            raise ConfigError(f"dpo.beta must be > 0, got {self.beta}")
        if not self.learning_rate > 0:
            raise ConfigError(f"dpo.learning_rate must be > 0, got {self.learning_rate}")
        if self.steps < 1:
            raise ConfigError(f"dpo.steps must be >= 1, got {self.steps}")


def _mean(values: np.ndarray) -> float:
    # exactly rounded sum, so batch order never changes the result
    return math.fsum(values.tolist()) / len(values)


def preference_logits(policy_chosen_logps, policy_rejected_logps,
                      reference_chosen_logps, reference_rejected_logps) -> np.ndarray:
    reference_chosen_logps = np.asarray(reference_chosen_logps, dtype=float)
    reference_rejected_logps = np.asarray(reference_rejected_logps, dtype=float)
    if not (np.all(np.isfinite(reference_chosen_logps)) and np.all(np.isfinite(reference_rejected_logps))):
        raise ReferenceSupportError("a completion has zero probability under the reference policy")

    policy_logratios = np.asarray(policy_chosen_logps, dtype=float) - np.asarray(policy_rejected_logps, dtype=float)
    reference_logratios = reference_chosen_logps - reference_rejected_logps
    return policy_logratios - reference_logratios


def dpo_loss_from_logps(policy_chosen_logps, policy_rejected_logps,
                        reference_chosen_logps, reference_rejected_logps, beta: float) -> float:
    if not beta > 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    logits = preference_logits(
        policy_chosen_logps, policy_rejected_logps, reference_chosen_logps, reference_rejected_logps
    )
    if logits.size == 0:
        raise ValueError("empty batch")
    return _mean(-log_expit(beta * logits))


def _gather(policy: Policy, pairs: ToyPairs) -> tuple[np.ndarray, np.ndarray]:
    log_probs = policy.log_probs()
    pairs.check_support(log_probs.shape)
    return log_probs[pairs.prompt, pairs.chosen], log_probs[pairs.prompt, pairs.rejected]


def dpo_loss(pairs: ToyPairs, policy: Policy, reference: Policy, beta: float) -> float:
    policy_chosen, policy_rejected = _gather(policy, pairs)
    reference_chosen, reference_rejected = _gather(reference, pairs)
    return dpo_loss_from_logps(policy_chosen, policy_rejected, reference_chosen, reference_rejected, beta)


def dpo_gradient(pairs: ToyPairs, policy: ToyPolicy, reference: Policy, beta: float) -> np.ndarray:
    """Gradient of ``dpo_loss`` with respect to ``policy.logits``.

    The softmax normaliser cancels in log pi(y_w) - log pi(y_l), so each pair
    only touches its chosen and rejected logits.
    """
    if not beta > 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    policy_chosen, policy_rejected = _gather(policy, pairs)
    reference_chosen, reference_rejected = _gather(reference, pairs)
    z = beta * preference_logits(policy_chosen, policy_rejected, reference_chosen, reference_rejected)

    # d/dz of -log sigmoid(z) is -sigmoid(-z)
    weight = -expit(-z) * beta / len(pairs)
    grad = np.zeros_like(policy.logits)
    np.add.at(grad, (pairs.prompt, pairs.chosen), weight)
    np.add.at(grad, (pairs.prompt, pairs.rejected), -weight)
    return grad


def margins(pairs: ToyPairs, policy: Policy) -> np.ndarray:
    chosen, rejected = _gather(policy, pairs)
    return chosen - rejected


def toy_train(
    pairs: ToyPairs,
    reference: ToyPolicy,
    cfg: DpoConfig,
    initial: Optional[ToyPolicy] = None,
    test_pairs: Optional[ToyPairs] = None,
) -> tuple[ToyPolicy, pd.DataFrame]:
    """Plain gradient descent on the DPO loss, starting from the reference by default.

    The history has one row per step (plus the final state): training loss,
    mean margin, gradient norm and, when ``test_pairs`` is given, held-out loss.
    """
    policy = (initial or reference).copy()
    history = []
    last_finite = float("nan")

    for step in range(cfg.steps + 1):
        loss = dpo_loss(pairs, policy, reference, cfg.beta)
        if math.isnan(loss):
            raise TrainingDivergedError(step, last_finite)
        grad = dpo_gradient(pairs, policy, reference, cfg.beta)
        history.append({
            "step": step,
            "loss": loss,
            "mean_margin": float(np.mean(margins(pairs, policy))),
            "grad_norm": float(np.linalg.norm(grad)),
            "test_loss": dpo_loss(test_pairs, policy, reference, cfg.beta) if test_pairs is not None else np.nan,
        })
        last_finite = loss
        if step == cfg.steps:
            break

        logits = policy.logits - cfg.learning_rate * grad
        if not np.all(np.isfinite(logits)):
            raise TrainingDivergedError(step + 1, last_finite)
        policy = ToyPolicy(logits)

    df_history = pd.DataFrame(history)
    logger.debug("toy_train: loss %.6f -> %.6f over %d steps", df_history.loss.iloc[0], df_history.loss.iloc[-1], cfg.steps)
    return policy, df_history


# -----------------------
# Scoring exported pair files
# -----------------------
def completion_key(messages: Sequence[ChatMessage]) -> str:
    """SHA-256 of the canonical JSON of a completion's messages."""
    return hashlib.sha256(canonical_json([m.to_dict() for m in messages]).encode("utf-8")).hexdigest()


def load_logp_table(path: Path) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"log-prob table not found: {path}")
    df = pd.read_csv(path, dtype={"completion": str})
    missing = {"completion", "policy_logp", "reference_logp"} - set(df.columns)
    if missing:
        raise ConfigError(f"{path} lacks columns {sorted(missing)}")
    if df["completion"].duplicated().any():
        raise ConfigError(f"{path} lists a completion more than once")
    return df.set_index("completion")


def score_pairs(records, table: pd.DataFrame, beta: float, source: Path = Path("<table>")) -> float:
    """DPO loss of exported records under per-completion log-probabilities."""
    columns = {"policy_chosen": [], "policy_rejected": [], "reference_chosen": [], "reference_rejected": []}
    for record in records:
        for side in ("chosen", "rejected"):
            key = completion_key(record[side])
            if key not in table.index:
                raise DatasetIntegrityError(source, f"no log-probs for {side} completion {key}")
            columns[f"policy_{side}"].append(table.at[key, "policy_logp"])
            columns[f"reference_{side}"].append(table.at[key, "reference_logp"])
    if not columns["policy_chosen"]:
        raise ValueError("no pairs to score")
    return dpo_loss_from_logps(
        columns["policy_chosen"], columns["policy_rejected"],
        columns["reference_chosen"], columns["reference_rejected"], beta,
    )
