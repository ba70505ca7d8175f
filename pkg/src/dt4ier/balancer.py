"""User-adaptive balancing of the click and retention return-to-go channels."""

from __future__ import annotations

from typing import Sequence

import numpy as np
import torch
import torch.nn as nn

from .trajectory import RtgPair


class RtgBalancer(nn.Module):
    """Maps user features to convex weights ``(b_s, b_l)``.

    Categorical features go through one embedding table each; numeric
    features through a sigmoid MLP; the concatenation is scored by a second
    MLP whose two logits are softmax-normalised.
    """

    def __init__(self, cat_cardinalities: Sequence[int], n_numeric: int, d_c: int = 8, hidden: int = 32):
        super().__init__()
        self.cat_cardinalities = tuple(int(c) for c in cat_cardinalities)
        self.n_numeric = n_numeric
        self.cat_tables = nn.ModuleList(nn.Embedding(c, d_c) for c in self.cat_cardinalities)
        self.numeric_mlp = nn.Sequential(
            nn.Linear(n_numeric, hidden), nn.Sigmoid(), nn.Linear(hidden, hidden), nn.Sigmoid()
        )
        self.fusion_mlp = nn.Sequential(
            nn.Linear(d_c * len(self.cat_tables) + hidden, hidden), nn.ReLU(), nn.Linear(hidden, 2)
        )

    def embed_categorical(self, categorical: torch.Tensor) -> torch.Tensor:
        if categorical.shape[-1] != len(self.cat_tables):
            raise ValueError(f"expected {len(self.cat_tables)} categorical features")
        for i, card in enumerate(self.cat_cardinalities):
            col = categorical[..., i]
            if (col < 0).any() or (col >= card).any():
                raise ValueError(f"categorical feature {i} id outside [0, {card})")
        return torch.cat([tab(categorical[..., i]) for i, tab in enumerate(self.cat_tables)], dim=-1)

    def encode_numeric(self, numeric: torch.Tensor) -> torch.Tensor:
        if numeric.shape[-1] != self.n_numeric:
            raise ValueError(f"expected {self.n_numeric} numeric features")
        if torch.isnan(numeric).any():
            raise ValueError("NaN in numeric user features")
        return self.numeric_mlp(numeric)

    def logits(self, numeric: torch.Tensor, categorical: torch.Tensor) -> torch.Tensor:
        fused = torch.cat([self.embed_categorical(categorical), self.encode_numeric(numeric)], dim=-1)
        return self.fusion_mlp(fused)

    def forward(self, numeric: torch.Tensor, categorical: torch.Tensor) -> torch.Tensor:
        """Balance weights, shape ``(..., 2)`` ordered ``(b_s, b_l)``."""
        return torch.softmax(self.logits(numeric, categorical), dim=-1)

    compute_weights = forward


def features_to_tensors(features, dtype=torch.float32) -> tuple[torch.Tensor, torch.Tensor]:
    """Stack a sequence of ``UserFeatures`` into numeric and categorical tensors."""
    numeric = torch.tensor(np.array([f.numeric for f in features], dtype=np.float64), dtype=dtype)
    categorical = torch.tensor(np.array([f.categorical for f in features], dtype=np.int64))
    return numeric, categorical


def balanced_reward_loss(weights: torch.Tensor, rtg: torch.Tensor, gamma: float) -> torch.Tensor:
    """Negative weighted return with a squared imbalance penalty, summed over users.

    ``weights`` and ``rtg`` are ``(K, 2)``: one weight pair and one terminal
    return-to-go pair per user.
    """
    if weights.shape != rtg.shape or weights.shape[-1] != 2:
        raise ValueError(f"weights {tuple(weights.shape)} and rtg {tuple(rtg.shape)} must both be (K, 2)")
    short = weights[..., 0] * rtg[..., 0]
    long = weights[..., 1] * rtg[..., 1]
    return -((short + long) - gamma * (short - long) ** 2).sum()


def rebalance_rtg(rtgs: Sequence[RtgPair], weights: tuple[float, float]) -> list[RtgPair]:
    b_s, b_l = weights
    return [RtgPair(b_s * r.R_s, b_l * r.R_l) for r in rtgs]
