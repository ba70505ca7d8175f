"""Token assembly, the causally masked transformer, and action rollout."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np
import torch
import torch.nn as nn

from .balancer import RtgBalancer
from .codec import ActionDecoder, ItemEmbedding, SequenceEncoder
from .config import ModelConfig
from .reward_embedding import LinearRewardEmbedding, MultiRewardEmbedding
from .trajectory import PAD_ID, RtgPair, Trajectory, build_state

SLOTS = 3  # (reward, state, action) tokens per session
STATE_SLOT = 1


@dataclass
class Batch:
    """Trajectories stacked to a common length; shorter ones are padded at the end."""

    states: torch.Tensor  # (B, T, H) long
    actions: torch.Tensor  # (B, T, N) long
    rewards: torch.Tensor  # (B, T, 2)
    rtgs: torch.Tensor  # (B, T, 2)
    mask: torch.Tensor  # (B, T) bool, valid sessions
    remaining: torch.Tensor  # (B, T) sessions left including the current one
    numeric: torch.Tensor | None = None
    categorical: torch.Tensor | None = None

    @property
    def size(self) -> int:
        return self.states.shape[0]

    @property
    def T(self) -> int:
        return self.states.shape[1]

    def select(self, idx) -> "Batch":
        opt = lambda x: None if x is None else x[idx]  # noqa: E731
        return Batch(self.states[idx], self.actions[idx], self.rewards[idx], self.rtgs[idx],
                     self.mask[idx], self.remaining[idx], opt(self.numeric), opt(self.categorical))

    def truncate(self, T: int) -> "Batch":
        return replace(self, states=self.states[:, :T], actions=self.actions[:, :T], rewards=self.rewards[:, :T],
                       rtgs=self.rtgs[:, :T], mask=self.mask[:, :T], remaining=self.remaining[:, :T])


def collate(trajs: Sequence[Trajectory], features: Mapping | None = None, T: int | None = None,
            dtype=torch.float32) -> Batch:
    if not trajs:
        raise ValueError("cannot collate an empty trajectory list")
    T = max(tr.length for tr in trajs) if T is None else T
    H, N = trajs[0].H, trajs[0].N
    B = len(trajs)
    states = np.zeros((B, T, H), dtype=np.int64)
    actions = np.zeros((B, T, N), dtype=np.int64)
    rewards = np.zeros((B, T, 2))
    rtgs = np.zeros((B, T, 2))
    mask = np.zeros((B, T), dtype=bool)
    remaining = np.zeros((B, T))
    for b, tr in enumerate(trajs):
        L = tr.length
        if L > T:
            raise ValueError(f"trajectory of length {L} exceeds T={T}")
        states[b, :L] = tr.states
        actions[b, :L] = tr.actions
        rewards[b, :L] = tr.reward_array()
        rtgs[b, :L] = tr.rtg_array()
        mask[b, :L] = True
        remaining[b, :L] = np.arange(L, 0, -1)
    numeric = categorical = None
    if features is not None:
        feats = [features[tr.user_id] for tr in trajs]
        numeric = torch.tensor(np.array([f.numeric for f in feats]), dtype=dtype)
        categorical = torch.tensor(np.array([f.categorical for f in feats], dtype=np.int64))
    return Batch(
        torch.from_numpy(states), torch.from_numpy(actions),
        torch.tensor(rewards, dtype=dtype), torch.tensor(rtgs, dtype=dtype),
        torch.from_numpy(mask), torch.tensor(remaining, dtype=dtype), numeric, categorical,
    )


def slot_mask(session_mask: torch.Tensor) -> torch.Tensor:
    return session_mask.repeat_interleave(SLOTS, dim=-1)


class CausalSelfAttention(nn.Module):
    def __init__(self, d: int, heads: int, dropout: float = 0.0):
        super().__init__()
        if d % heads:
            raise ValueError("d must be divisible by heads")
        self.heads = heads
        self.qkv = nn.Linear(d, 3 * d)
        self.out = nn.Linear(d, d)
        self.drop = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor, valid: torch.Tensor | None = None, return_weights: bool = False):
        B, L, d = x.shape
        q, k, v = self.qkv(x).view(B, L, 3, self.heads, d // self.heads).permute(2, 0, 3, 1, 4)
        scores = q @ k.transpose(-2, -1) / math.sqrt(d // self.heads)
        allowed = torch.ones(L, L, dtype=torch.bool, device=x.device).tril()
        if valid is not None:
            # invalid keys are hidden; the diagonal stays open so no row is empty
            eye = torch.eye(L, dtype=torch.bool, device=x.device)
            allowed = allowed & (valid[:, None, None, :] | eye)
        att = scores.masked_fill(~allowed, float("-inf")).softmax(dim=-1)
        z = (self.drop(att) @ v).transpose(1, 2).reshape(B, L, d)
        z = self.out(z)
        return (z, att) if return_weights else z


class Block(nn.Module):
    def __init__(self, d: int, heads: int, dropout: float = 0.0):
        super().__init__()
        self.ln1 = nn.LayerNorm(d)
        self.attn = CausalSelfAttention(d, heads, dropout)
        self.ln2 = nn.LayerNorm(d)
        self.ffn = nn.Sequential(nn.Linear(d, 4 * d), nn.GELU(), nn.Linear(4 * d, d), nn.Dropout(dropout))

    def forward(self, x, valid=None, return_weights=False):
        a = self.attn(self.ln1(x), valid, return_weights)
        if return_weights:
            a, w = a
        x = x + a
        x = x + self.ffn(self.ln2(x))
        return (x, w) if return_weights else x


class CausalTransformer(nn.Module):
    """Pre-norm transformer over ``3T`` interleaved tokens with a learned session-position table."""

    def __init__(self, d: int, layers: int, heads: int, max_sessions: int, dropout: float = 0.0):
        super().__init__()
        self.session_pos = nn.Embedding(max_sessions, d)
        self.blocks = nn.ModuleList(Block(d, heads, dropout) for _ in range(layers))
        self.ln_f = nn.LayerNorm(d)

    def forward(self, tokens: torch.Tensor, valid: torch.Tensor | None = None, return_weights: bool = False):
        weights = []
        x = tokens
        for blk in self.blocks:
            if return_weights:
                x, w = blk(x, valid, True)
                weights.append(w)
            else:
                x = blk(x, valid)
        x = self.ln_f(x)
        return (x, weights) if return_weights else x


@dataclass
class ModelOutput:
    predicted: torch.Tensor  # (B, T, d) action embeddings read at the state slots
    action_tokens: torch.Tensor  # (B, T, d) encoder output for the logged actions
    balance: torch.Tensor  # (B, 2) balance weights (with gradient)
    hidden: torch.Tensor  # (B, 3T, d)


class DecisionRecommender(nn.Module):
    """Multi-reward decision transformer: RTG/state/action tokens in, item lists out."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        c = config
        if c.num_items is None:
            raise ValueError("config.num_items must be set before building a model")
        self.config = c
        if c.disable_balancer:
            self.balancer = None
        else:
            if c.n_numeric is None or c.cat_cardinalities is None:
                raise ValueError("balancer needs n_numeric and cat_cardinalities")
            self.balancer = RtgBalancer(c.cat_cardinalities, c.n_numeric, c.d_c, c.balancer_hidden)
        if c.plain_reward_embedding:
            self.reward_embedding = LinearRewardEmbedding(c.d)
        else:
            self.reward_embedding = MultiRewardEmbedding(c.d, c.bins, c.reward_hidden, c.leaky_slope)
        self.items = ItemEmbedding(c.num_items, c.d)
        nn.init.normal_(self.items.weight, std=c.d ** -0.5)
        self.items.reset_padding()
        self.state_encoder = SequenceEncoder(c.d)
        self.action_encoder = SequenceEncoder(c.d)
        self.transformer = CausalTransformer(c.d, c.layers, c.heads, c.T, c.dropout)
        self.decoder = ActionDecoder(c.d)

    def balance_weights(self, batch: Batch) -> torch.Tensor:
        if self.balancer is None:
            return torch.full((batch.size, 2), 0.5, dtype=batch.rtgs.dtype)
        if batch.numeric is None:
            raise ValueError("the balancer needs user features")
        return self.balancer(batch.numeric, batch.categorical)

    def normalized_rtg(self, batch: Batch, balance: torch.Tensor, rtgs: torch.Tensor | None = None) -> torch.Tensor:
        rtgs = batch.rtgs if rtgs is None else rtgs
        rebalanced = self.config.rtg_scale * rtgs * balance.detach()[:, None, :]
        return (rebalanced / batch.remaining.clamp(min=1.0)[..., None]).clamp(0.0, 1.0)

    def assemble_tokens(self, batch: Batch, rtgs: torch.Tensor | None = None):
        """Interleaved ``(R_1, s_1, a_1, ..., R_T, s_T, a_T)`` tokens and their validity mask."""
        if batch.T > self.config.T:
            raise ValueError(f"batch has {batch.T} sessions, model supports {self.config.T}")
        balance = self.balance_weights(batch)
        r_tok = self.reward_embedding(self.normalized_rtg(batch, balance, rtgs))
        s_tok = self.state_encoder(batch.states, self.items)
        a_tok = self.action_encoder(batch.actions, self.items)
        pos = self.transformer.session_pos.weight[: batch.T]
        tokens = torch.stack([r_tok, s_tok, a_tok], dim=2) + pos[None, :, None, :]
        B, T = batch.size, batch.T
        return tokens.reshape(B, SLOTS * T, -1), slot_mask(batch.mask), balance, a_tok

    def causal_forward(self, tokens: torch.Tensor, valid: torch.Tensor | None = None) -> torch.Tensor:
        return self.transformer(tokens, valid)

    def forward(self, batch: Batch, rtgs: torch.Tensor | None = None) -> ModelOutput:
        tokens, valid, balance, a_tok = self.assemble_tokens(batch, rtgs)
        hidden = self.causal_forward(tokens, valid)
        predicted = hidden[:, STATE_SLOT::SLOTS]
        return ModelOutput(predicted, a_tok, balance, hidden)

    def action_logits(self, predicted: torch.Tensor, truth: torch.Tensor) -> torch.Tensor:
        return self.decoder.teacher(predicted, truth, self.items)

    def decode(self, predicted: torch.Tensor, N: int | None = None) -> torch.Tensor:
        return self.decoder.greedy(predicted, self.config.N if N is None else N, self.items)


def prompt_rtg(rho: float | tuple[float, float], remaining: int, max_step_reward: float = 1.0) -> RtgPair:
    """Prompt that asks for ``rho`` times the maximal per-step reward on each channel."""
    rs, rl = (rho, rho) if np.isscalar(rho) else rho
    return RtgPair(rs * max_step_reward * remaining, rl * max_step_reward * remaining)


def prompted_rtgs(batch: Batch, rho: tuple[float, float]) -> torch.Tensor:
    """RTG tokens for every session when each step is assumed to earn ``rho``."""
    rate = torch.tensor(rho, dtype=batch.rtgs.dtype)
    return batch.remaining[..., None] * rate


@dataclass
class Rollout:
    actions: list[np.ndarray]
    rtgs: list[RtgPair]
    rewards: list[tuple[float, float]] | None = None


def predict_actions(model: DecisionRecommender, trajectory: Trajectory, start: int, prompt: RtgPair,
                    features: Mapping | None = None, world=None, rng: np.random.Generator | None = None) -> Rollout:
    """Autoregressively recommend sessions ``start .. T-1`` of ``trajectory``.

    Sessions before ``start`` are the logged prefix.  The prompt is the target
    return-to-go at ``start``; earlier sessions carry the same per-step rate.
    After each session the prompt is reduced by the realized reward when a
    world is attached (its clicks also advance the state), otherwise by the
    assumed per-step rate, floored at zero.
    """
    return rollout_many(model, [trajectory], start, [prompt], features, world, rng)[0]


@torch.no_grad()
def rollout_many(model: DecisionRecommender, trajectories: Sequence[Trajectory], start: int,
                 prompts: Sequence[RtgPair], features: Mapping | None = None, world=None,
                 rng: np.random.Generator | None = None) -> list[Rollout]:
    """Batched :func:`predict_actions`; trajectories step through sessions together."""
    B = len(trajectories)
    lengths = np.array([tr.length for tr in trajectories])
    if len(prompts) != B:
        raise ValueError("one prompt per trajectory")
    if not (0 <= start < lengths.min()):
        raise ValueError(f"start={start} outside [0, {lengths.min()})")
    rates = np.zeros((B, 2))
    for b, (tr, prompt) in enumerate(zip(trajectories, prompts)):
        remaining = tr.length - start
        if not (0 <= prompt.R_s <= remaining and 0 <= prompt.R_l <= remaining):
            raise ValueError(f"prompt {prompt} outside [0, {remaining}]")
        rates[b] = [float(prompt.R_s) / remaining, float(prompt.R_l) / remaining]
    model.eval()
    feats = None if model.balancer is None else features
    base = collate(trajectories, feats, dtype=model.items.weight.dtype)
    T = base.T
    states = base.states.numpy().copy()
    actions = base.actions.numpy().copy()
    rtg = np.zeros((B, T, 2))
    for b, L in enumerate(lengths):
        rtg[b, :start] = rates[b] * np.arange(L, L - start, -1)[:, None]
        rtg[b, start] = rates[b] * (L - start)
    if world is not None:
        rng = np.random.default_rng() if rng is None else rng
        latents = [world.latent(tr.user_id) for tr in trajectories]
        histories = [[int(i) for i in states[b, start] if i != PAD_ID] for b in range(B)]

    results = [Rollout([], [], [] if world is not None else None) for _ in range(B)]
    for t in range(start, T):
        active = np.flatnonzero(lengths > t)
        batch = replace(base, states=torch.from_numpy(states), actions=torch.from_numpy(actions)).truncate(t + 1)
        tok_rtg = torch.tensor(rtg[:, : t + 1], dtype=batch.rtgs.dtype)
        pred = model(batch, tok_rtg).predicted[torch.from_numpy(active), t]
        items = model.decode(pred).numpy()
        for j, b in enumerate(active):
            actions[b, t] = items[j]
            res = results[b]
            res.actions.append(items[j])
            res.rtgs.append(RtgPair(float(rtg[b, t, 0]), float(rtg[b, t, 1])))
            step = rates[b]
            if world is not None:
                clicks, gap = world.respond(latents[b], items[j], rng)
                step = np.array([clicks.mean(), 1.0 / gap])
                res.rewards.append((float(step[0]), float(step[1])))
                histories[b].extend(int(i) for i, c in zip(items[j], clicks) if c)
                if t + 1 < lengths[b]:
                    states[b, t + 1] = build_state(histories[b], trajectories[b].H)
            if t + 1 < lengths[b]:
                rtg[b, t + 1] = np.maximum(rtg[b, t] - step, 0.0)
    return results
