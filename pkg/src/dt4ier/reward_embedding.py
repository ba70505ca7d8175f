"""Multi-reward embedding of two-channel returns-to-go."""

from __future__ import annotations

import math

import torch
import torch.nn as nn

from .trajectory import RtgPair


def normalize_rtg(rtg: RtgPair, remaining_horizon: int) -> tuple[float, float]:
    """Per-step average of the remaining return, clipped to [0, 1]."""
    if remaining_horizon < 1:
        raise ValueError("remaining_horizon must be >= 1")
    return (
        min(1.0, max(0.0, float(rtg.R_s) / remaining_horizon)),
        min(1.0, max(0.0, float(rtg.R_l) / remaining_horizon)),
    )


def discretize(value: float, bins: int) -> int:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"value {value} outside [0, 1]")
    return min(bins - 1, int(math.floor(value * bins)))


def discretize_tensor(values: torch.Tensor, bins: int) -> torch.Tensor:
    return torch.floor(values.clamp(0.0, 1.0) * bins).long().clamp(max=bins - 1)


class MultiRewardEmbedding(nn.Module):
    """Per-channel binned meta-embeddings, weighted by an MLP over the raw values.

    Input is the normalised (and rebalanced) RTG pair in [0, 1]; output is the
    concatenation ``[w_1 * E_s[bin_s], w_2 * E_l[bin_l]]`` of width ``d``.
    """

    def __init__(self, d: int, bins: int = 8, hidden: int = 16, slope: float = 0.01):
        super().__init__()
        if d % 2:
            raise ValueError("d must be even")
        self.bins = bins
        self.short_table = nn.Embedding(bins, d // 2)
        self.long_table = nn.Embedding(bins, d // 2)
        self.weight_mlp = nn.Sequential(nn.Linear(2, hidden), nn.LeakyReLU(slope), nn.Linear(hidden, 2))

    def reward_weights(self, rtg_norm: torch.Tensor) -> torch.Tensor:
        return torch.softmax(self.weight_mlp(rtg_norm), dim=-1)

    def forward(self, rtg_norm: torch.Tensor) -> torch.Tensor:
        idx = discretize_tensor(rtg_norm, self.bins)
        w = self.reward_weights(rtg_norm)
        return torch.cat(
            [w[..., :1] * self.short_table(idx[..., 0]), w[..., 1:] * self.long_table(idx[..., 1])], dim=-1
        )

    def embed_reward(self, rtg: RtgPair, remaining_horizon: int) -> torch.Tensor:
        x = torch.tensor(normalize_rtg(rtg, remaining_horizon), dtype=self.short_table.weight.dtype)
        return self(x)


class LinearRewardEmbedding(nn.Module):
    """Plain reward embedding: one linear map of the continuous RTG pair."""

    def __init__(self, d: int):
        super().__init__()
        self.proj = nn.Linear(2, d)

    def forward(self, rtg_norm: torch.Tensor) -> torch.Tensor:
        return self.proj(rtg_norm)
