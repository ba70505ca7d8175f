"""Training objective: decoded-action cross-entropy, contrastive separation, composition."""

from __future__ import annotations

import logging

import torch
import torch.nn.functional as F

from .trajectory import PAD_ID

logger = logging.getLogger(__name__)


def select_negatives(rewards: torch.Tensor, theta: float, valid: torch.Tensor | None = None) -> torch.Tensor:
    """Boolean mask over ``(trajectory, session)`` pairs whose two rewards are both below ``theta``."""
    neg = (rewards[..., 0] < theta) & (rewards[..., 1] < theta)
    return neg if valid is None else neg & valid


def contrastive_loss(predicted: torch.Tensor, negatives: torch.Tensor) -> torch.Tensor:
    """Mean cosine similarity between predicted action embeddings and negative action embeddings.

    Minimising it pushes predictions away from actions that earned low
    rewards on both channels.  Negatives are constants.  A zero vector has
    similarity 0 with everything; an empty negative set gives 0.
    """
    if negatives.numel() == 0 or predicted.numel() == 0:
        return predicted.sum() * 0.0
    p = F.normalize(predicted.reshape(-1, predicted.shape[-1]), dim=-1, eps=1e-12)
    n = F.normalize(negatives.detach().reshape(-1, negatives.shape[-1]), dim=-1, eps=1e-12)
    return (p @ n.T).mean()


def cross_entropy_loss(logits: torch.Tensor, truth: torch.Tensor, valid: torch.Tensor | None = None) -> torch.Tensor:
    """Mean negative log-likelihood of the logged items; padding positions are skipped.

    ``logits`` is ``(..., N, V+1)``, ``truth`` is ``(..., N)``; ``valid`` masks
    whole sessions, shaped like ``truth`` without the last axis.
    """
    keep = truth != PAD_ID
    if valid is not None:
        keep = keep & valid[..., None]
    if not keep.any():
        logger.warning("cross_entropy_loss: every position is masked")
        return logits.sum() * 0.0
    target = truth.masked_fill(~keep, PAD_ID)
    return F.cross_entropy(logits.reshape(-1, logits.shape[-1]), target.reshape(-1), ignore_index=PAD_ID)


def total_loss(cross: torch.Tensor, contra: torch.Tensor | float, alpha: float,
               balance: torch.Tensor | float = 0.0, include_balancer: bool = True,
               balancer_weight: float = 1.0):
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    loss = cross + alpha * contra
    if include_balancer:
        loss = loss + balancer_weight * balance
    return loss
