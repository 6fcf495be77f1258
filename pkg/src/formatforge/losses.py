"""Reference SFT and DPO objective values over token log-probabilities.

These are scalar reference computations for validating external trainers,
not a training loop. Sequence log-probability is the sum of per-token
natural-log probabilities; the DPO loss uses the numerically stable
softplus form of -log(sigmoid(x)), which stays finite for margins far
beyond +-1e4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterable


@dataclass(frozen=True)
class SequenceLogProb:
    token_logprobs: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.token_logprobs:
            raise ValueError("sequence must have at least one token")
        for value in self.token_logprobs:
            if value > 0:
                raise ValueError(f"log-probability {value} is positive")

    @property
    def total(self) -> float:
        return sum(self.token_logprobs)

    def __len__(self) -> int:
        return len(self.token_logprobs)


@dataclass(frozen=True)
class DpoInputs:
    policy_chosen: SequenceLogProb
    policy_rejected: SequenceLogProb
    ref_chosen: SequenceLogProb
    ref_rejected: SequenceLogProb
    beta: float = 0.1

    def __post_init__(self) -> None:
        if self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")


def sft_loss(sequence: SequenceLogProb, normalize: bool = False) -> float:
    """Per-sample negative log-likelihood of the preferred response."""
    loss = -sequence.total
    if normalize:
        loss /= len(sequence)
    return loss


def _neg_log_sigmoid(x: float) -> float:
    # softplus(-x), branch-stable: no exp overflow for large |x|.
    if x >= 0:
        return math.log1p(math.exp(-x))
    return -x + math.log1p(math.exp(x))


def implicit_reward_margin(inputs: DpoInputs) -> float:
    """beta * ((policy - ref) gap for chosen minus the same gap for rejected)."""
    delta_chosen = inputs.policy_chosen.total - inputs.ref_chosen.total
    delta_rejected = inputs.policy_rejected.total - inputs.ref_rejected.total
    return inputs.beta * (delta_chosen - delta_rejected)


def dpo_loss(inputs: DpoInputs) -> float:
    """-log(sigmoid(margin)) where margin = implicit_reward_margin(inputs)."""
    return _neg_log_sigmoid(implicit_reward_margin(inputs))


def dpo_loss_from_margin(margin: float) -> float:
    """Loss as a direct function of the reward margin (cross-check identity)."""
    return _neg_log_sigmoid(margin)


def batch_dpo_losses(records: Iterable[dict[str, Any]], beta: float = 0.1) -> list[dict[str, Any]]:
    """Evaluate dpo_loss over JSON records of token log-probability arrays.

    Each record needs policy_chosen / policy_rejected / ref_chosen /
    ref_rejected arrays; an optional id is passed through.
    """
    results = []
    for record in records:
        inputs = DpoInputs(
            policy_chosen=SequenceLogProb(tuple(record["policy_chosen"])),
            policy_rejected=SequenceLogProb(tuple(record["policy_rejected"])),
            ref_chosen=SequenceLogProb(tuple(record["ref_chosen"])),
            ref_rejected=SequenceLogProb(tuple(record["ref_rejected"])),
            beta=beta,
        )
        results.append(
            {
                "id": record.get("id"),
                "margin": implicit_reward_margin(inputs),
                "loss": dpo_loss(inputs),
            }
        )
    return results
