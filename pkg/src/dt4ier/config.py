"""Experiment configuration: model/training hyperparameters and the synthetic world."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

SEED_ENV = "DT4IER_SEED"


class _JsonConfig:
    @classmethod
    def from_dict(cls, d: dict):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**kw)

    @classmethod
    def load(cls, path: str | Path, env: bool = True):
        with open(path) as fh:
            cfg = cls.from_dict(json.load(fh))
        return cfg.with_env_seed() if env else cfg

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(self).items()}

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    def with_env_seed(self):
        seed = os.environ.get(SEED_ENV)
        return self.replace(seed=int(seed)) if seed is not None else self

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class ModelConfig(_JsonConfig):
    """Architecture and training hyperparameters.

    Defaults follow the published setup (T=20, H=N=30, d=128, 2 layers,
    8 heads, gamma=0.5, alpha=0.1, theta=0.6, batch 128, Adam at 0.005).
    ``num_items``, ``n_numeric`` and ``cat_cardinalities`` describe the data
    and are filled in from the world manifest when left unset.
    """

    T: int = 20
    H: int = 30
    N: int = 30
    d: int = 128
    layers: int = 2
    heads: int = 8
    bins: int = 8
    gamma: float = 0.5
    alpha: float = 0.1
    theta: float = 0.6
    batch_size: int = 128
    lr: float = 0.005
    max_steps: int = 1000
    seed: int = 0
    disable_balancer: bool = False
    plain_reward_embedding: bool = False
    disable_contrastive: bool = False
    balancer_loss_weight: float = 1.0
    grad_clip: float = 1.0
    d_c: int = 8
    balancer_hidden: int = 32
    reward_hidden: int = 16
    leaky_slope: float = 0.01
    dropout: float = 0.0
    rtg_scale: float = 1.0
    k: int = 10
    val_fraction: float = 0.1
    log_every: int = 1
    checkpoint_every: int = 0
    num_items: int | None = None
    n_numeric: int | None = None
    cat_cardinalities: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.d % self.heads:
            raise ValueError(f"d={self.d} not divisible by heads={self.heads}")
        if self.d % 2:
            raise ValueError("d must be even (two reward half-embeddings)")
        if self.alpha < 0 or self.gamma < 0:
            raise ValueError("alpha and gamma must be non-negative")
        if not 0 < self.theta <= 1:
            raise ValueError("theta must lie in (0, 1]")
        if min(self.T, self.H, self.N, self.bins, self.batch_size) < 1:
            raise ValueError("T, H, N, bins and batch_size must be positive")

    @property
    def effective_alpha(self) -> float:
        return 0.0 if self.disable_contrastive else self.alpha


@dataclass(frozen=True)
class WorldConfig(_JsonConfig):
    """Synthetic world parameters; ``seed`` fixes every random draw."""

    num_users: int = 500
    num_items: int = 2000
    num_topics: int = 10
    ret_fraction: float = 0.5
    sessions_per_user: int = 20
    T: int = 20
    N: int = 30
    H: int = 30
    min_list_len: int | None = None
    n_numeric: int = 4
    cat_cardinalities: tuple[int, ...] = field(default=(4, 3))
    click_prob: float = 0.35
    click_spread: float = 0.25
    return_min: float = 0.05
    return_max: float = 0.95
    exposure_jitter: float = 0.15
    exposure_concentration: float = 0.3
    popularity_exponent: float = 1.0
    noise: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.num_items < self.N:
            raise ValueError("num_items must be >= N")
        if self.num_topics < 1 or self.num_items < self.num_topics:
            raise ValueError("need 1 <= num_topics <= num_items")
        if not 0 < self.ret_fraction < 1:
            raise ValueError("ret_fraction must lie in (0, 1)")
        if self.n_numeric < 1 or not self.cat_cardinalities:
            raise ValueError("need at least one numeric and one categorical feature")
        if self.min_list_len is not None and not 1 <= self.min_list_len <= self.N:
            raise ValueError("min_list_len must lie in [1, N]")
        if not 0 <= self.click_prob <= 1 or not 0 <= self.return_min <= self.return_max <= 1:
            raise ValueError("probabilities must lie in [0, 1]")
