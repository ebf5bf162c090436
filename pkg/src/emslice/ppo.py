"""PPO building blocks: GAE, the clipped surrogate loss, and the value loss.

Loss functions return both the scalar loss and its gradient with respect to
their direct inputs (log-probs or value predictions); callers chain those
through the network's backward pass.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation

logger = logging.getLogger(__name__)


def compute_gae(rewards: np.ndarray, values: np.ndarray, bootstrap_value: float,
                gamma: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimation over one episode, backward in one pass.

    delta_t = r_t + gamma * V(o_{t+1}) - V(o_t), with V(o_T) given by
    ``bootstrap_value`` (0 for terminal episodes).  Returns per step are
    advantage + value.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if rewards.shape != values.shape:
        raise ContractViolation(
            f"rewards and values disagree: {rewards.shape} vs {values.shape}")
    t_len = len(rewards)
    next_values = np.append(values[1:], bootstrap_value)
    deltas = rewards + gamma * next_values - values
    advantages = np.empty(t_len)
    acc = 0.0
    for t in range(t_len - 1, -1, -1):
        acc = deltas[t] + gamma * lam * acc
        advantages[t] = acc
    return advantages, advantages + values


def standardize_advantages(advantages: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    """Zero-mean unit-variance rescale over one update window."""
    return (advantages - advantages.mean()) / max(advantages.std(), floor)


@dataclass
class ActorLossStats:
    mean_ratio: float
    clip_fraction: float
    n_skipped: int


def ppo_actor_loss(new_logprobs: np.ndarray, old_logprobs: np.ndarray,
                   advantages: np.ndarray, clip_epsilon: float
                   ) -> tuple[float, np.ndarray, ActorLossStats]:
    """Clipped surrogate loss and its gradient w.r.t. the new log-probs.

    loss = -mean_t min(r_t * A_t, clip(r_t, 1-eps, 1+eps) * A_t) with
    r_t = exp(new - old).  Samples with a non-finite ratio are skipped and
    counted.  The gradient through the clipped branch is zero.
    """
    new_logprobs = np.asarray(new_logprobs, dtype=np.float64)
    old_logprobs = np.asarray(old_logprobs, dtype=np.float64)
    advantages = np.asarray(advantages, dtype=np.float64)
    if not (new_logprobs.shape == old_logprobs.shape == advantages.shape):
        raise ContractViolation("actor loss inputs disagree in shape")

    with np.errstate(over="ignore"):  # overflowing ratios are skipped below
        ratio = np.exp(new_logprobs - old_logprobs)
    valid = np.isfinite(ratio)
    n_skipped = int((~valid).sum())
    if n_skipped:
        logger.warning("skipping %d samples with non-finite ratio", n_skipped)
    n = max(int(valid.sum()), 1)

    clipped = np.clip(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon)
    surr_raw = np.where(valid, ratio, 0.0) * advantages
    surr_clip = np.where(valid, clipped, 0.0) * advantages
    per_sample = np.minimum(surr_raw, surr_clip)
    loss = -float(per_sample[valid].sum()) / n

    # gradient flows only where the unclipped branch attains the min
    unclipped_active = valid & (surr_raw <= surr_clip)
    dlogp = np.where(unclipped_active, -advantages * np.where(valid, ratio, 0.0) / n, 0.0)

    stats = ActorLossStats(
        mean_ratio=float(ratio[valid].mean()) if n else 1.0,
        clip_fraction=float((np.abs(ratio[valid] - 1.0) > clip_epsilon).mean()),
        n_skipped=n_skipped,
    )
    return loss, dlogp, stats


def critic_loss(predictions: np.ndarray, returns: np.ndarray
                ) -> tuple[float, np.ndarray]:
    """Mean squared error and its gradient w.r.t. the predictions."""
    predictions = np.asarray(predictions, dtype=np.float64)
    returns = np.asarray(returns, dtype=np.float64)
    if predictions.shape != returns.shape:
        raise ContractViolation("value predictions and returns disagree in shape")
    diff = predictions - returns
    loss = float((diff * diff).mean())
    return loss, 2.0 * diff / len(diff)
