"""GRU encoders for state/action item lists and the GRU action decoder."""

from __future__ import annotations

import torch
import torch.nn as nn

from .trajectory import PAD_ID


class ItemEmbedding(nn.Embedding):
    """Item table with row 0 reserved for padding and pinned to zero."""

    def __init__(self, num_items: int, d: int):
        super().__init__(num_items + 1, d, padding_idx=PAD_ID)
        self.num_items = num_items

    def check_ids(self, items: torch.Tensor) -> None:
        if items.numel() and (int(items.min()) < 0 or int(items.max()) > self.num_items):
            raise ValueError(f"item id outside [0, {self.num_items}]")

    @torch.no_grad()
    def reset_padding(self) -> None:
        self.weight[PAD_ID].zero_()


class SequenceEncoder(nn.Module):
    """Runs a GRU from a zero state over embedded items; returns the last hidden state.

    Padding positions enter as zero vectors rather than being skipped.
    """

    def __init__(self, d: int):
        super().__init__()
        self.gru = nn.GRU(d, d, batch_first=True)

    def forward(self, items: torch.Tensor, table: ItemEmbedding) -> torch.Tensor:
        table.check_ids(items)
        lead = items.shape[:-1]
        x = table(items.reshape(-1, items.shape[-1]))
        _, h = self.gru(x)
        return h[-1].reshape(*lead, -1)


def encode_sequence(items: torch.Tensor, table: ItemEmbedding, encoder: SequenceEncoder) -> torch.Tensor:
    return encoder(items, table)


class ActionDecoder(nn.Module):
    """Decodes an action embedding into ``N`` per-position item logits.

    Each step consumes ``[prev_item ; A_t]`` projected back to width ``d``;
    the first step uses a learned start vector in place of a previous item.
    Logits are tied to the item table.
    """

    def __init__(self, d: int):
        super().__init__()
        self.start = nn.Parameter(torch.randn(d) * 0.1)
        self.proj = nn.Linear(2 * d, d)
        self.gru = nn.GRU(d, d, batch_first=True)

    def _inputs(self, prev: torch.Tensor, action: torch.Tensor) -> torch.Tensor:
        return self.proj(torch.cat([prev, action.expand_as(prev)], dim=-1))

    def teacher(self, action: torch.Tensor, truth: torch.Tensor, table: ItemEmbedding) -> torch.Tensor:
        """Teacher-forced logits ``(M, N, V+1)`` for ``action (M, d)`` and ``truth (M, N)``."""
        M, N = truth.shape
        prev = torch.cat([self.start.expand(M, 1, -1), table(truth[:, :-1])], dim=1)
        h, _ = self.gru(self._inputs(prev, action.unsqueeze(1).expand(M, N, -1)))
        return h @ table.weight.T

    @torch.no_grad()
    def greedy(self, action: torch.Tensor, N: int, table: ItemEmbedding, no_repeat: bool = True) -> torch.Tensor:
        """Greedy item lists ``(M, N)``; padding (and, by default, repeats) masked out."""
        M = action.shape[0]
        prev = self.start.expand(M, 1, -1)
        h = None
        banned = torch.zeros(M, table.num_embeddings, dtype=torch.bool, device=action.device)
        banned[:, PAD_ID] = True
        out = torch.empty(M, N, dtype=torch.long, device=action.device)
        for n in range(N):
            o, h = self.gru(self._inputs(prev, action.unsqueeze(1)), h)
            logits = (o[:, 0] @ table.weight.T).masked_fill(banned, float("-inf"))
            nxt = logits.argmax(dim=-1)
            out[:, n] = nxt
            if no_repeat:
                banned[torch.arange(M), nxt] = True
            prev = table(nxt).unsqueeze(1)
        return out

    def decode_action(self, action: torch.Tensor, table: ItemEmbedding, mode: str = "greedy",
                      truth: torch.Tensor | None = None, N: int | None = None) -> torch.Tensor:
        """Logits ``(M, N, V+1)`` under teacher items or under the decoder's own greedy choices."""
        if mode == "teacher":
            if truth is None:
                raise ValueError("teacher mode needs truth items")
            return self.teacher(action, truth, table)
        if mode != "greedy":
            raise ValueError(f"unknown decode mode {mode!r}")
        if N is None:
            raise ValueError("greedy mode needs N")
        items = self.greedy(action, N, table)
        return self.teacher(action, items, table)
