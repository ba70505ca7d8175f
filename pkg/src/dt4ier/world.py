"""Seeded synthetic recommendation world with planted click/retention structure.

The item vocabulary is split into topics; within every topic a fixed share of
items forms the retention-linked subset ``S_ret``.  A logging policy shows each
user lists drawn from the user's topic, mixing ``S_ret`` and ordinary items in
a user-specific (jittered) proportion drawn from ``Beta(a, a)``; small ``a``
makes the policy favour one side or the other for each user.  ``S_ret`` items are clicked less by
click-sensitive users, but lists rich in ``S_ret`` items bring the user back
sooner.  Every draw comes from a generator seeded by ``(seed, stream, user)``,
so users can be generated independently and in any order.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .config import WorldConfig
from .trajectory import SessionRecord, write_session_log

MANIFEST_SCHEMA = "world-v1"

_ITEMS, _LATENT, _FEATURES, _SESSIONS = 0, 1, 2, 3


@dataclass(frozen=True)
class UserFeatures:
    user_id: int
    numeric: tuple[float, ...]
    categorical: tuple[int, ...]


@dataclass(frozen=True)
class UserLatent:
    user_id: int
    topic: int
    mix: float
    retention_affinity: float
    click_sensitivity: float
    exposure: float


def _clip01(x):
    return np.clip(x, 0.0, 1.0)


class SyntheticWorld:
    def __init__(self, config: WorldConfig):
        self.config = config
        c = config
        rng = np.random.default_rng([c.seed, _ITEMS])
        perm = rng.permutation(c.num_items) + 1
        self.item_topic = np.zeros(c.num_items + 1, dtype=np.int64)
        self.item_topic[perm] = np.arange(c.num_items) % c.num_topics
        self.is_retention = np.zeros(c.num_items + 1, dtype=bool)
        self.log_popularity = np.full(c.num_items + 1, -np.inf)
        self.topic_items: list[np.ndarray] = []
        for topic in range(c.num_topics):
            items = perm[np.arange(c.num_items) % c.num_topics == topic]
            n_ret = max(1, int(round(c.ret_fraction * len(items))))
            self.is_retention[items[:n_ret]] = True
            ranks = rng.permutation(len(items))
            self.log_popularity[items] = -c.popularity_exponent * np.log1p(ranks)
            self.topic_items.append(np.sort(items))
        self.retention_items = np.flatnonzero(self.is_retention)

    # -- users -----------------------------------------------------------------

    def latent(self, user_id: int) -> UserLatent:
        c = self.config
        rng = np.random.default_rng([c.seed, _LATENT, user_id])
        topic = int(rng.integers(c.num_topics))
        mix = float(rng.beta(2.0, 2.0))
        a = c.exposure_concentration
        exposure = float(rng.beta(a, a))
        return UserLatent(
            user_id=user_id,
            topic=topic,
            mix=mix,
            retention_affinity=0.4 + 0.6 * mix,
            click_sensitivity=1.0 - mix,
            exposure=exposure,
        )

    def features(self, user_id: int) -> UserFeatures:
        c = self.config
        lat = self.latent(user_id)
        rng = np.random.default_rng([c.seed, _FEATURES, user_id])
        numeric = rng.uniform(size=c.n_numeric)
        numeric[0] = lat.mix + c.noise * rng.normal()
        if c.n_numeric > 1:
            numeric[1] = lat.click_sensitivity + c.noise * rng.normal()
        numeric = _clip01(numeric)
        cats = [int(rng.integers(card)) for card in c.cat_cardinalities]
        if rng.uniform() >= c.noise:
            cats[0] = min(c.cat_cardinalities[0] - 1, int(lat.mix * c.cat_cardinalities[0]))
        return UserFeatures(user_id, tuple(float(v) for v in numeric), tuple(cats))

    def users(self) -> list[UserFeatures]:
        return [self.features(u) for u in range(self.config.num_users)]

    # -- response model --------------------------------------------------------

    def click_probabilities(self, latent: UserLatent, items, offset: float = 0.0) -> np.ndarray:
        c = self.config
        items = np.asarray(items, dtype=np.int64)
        sign = np.where(self.is_retention[items], -1.0, 1.0)
        p = c.click_prob + c.click_spread * latent.click_sensitivity * sign + offset
        return np.clip(p, 0.01, 0.99)

    def return_probability(self, latent: UserLatent, items, offset: float = 0.0) -> float:
        """Probability that the user comes back the very next day."""
        c = self.config
        frac = float(np.mean(self.is_retention[np.asarray(items, dtype=np.int64)]))
        p = c.return_min + (c.return_max - c.return_min) * latent.retention_affinity * frac + offset
        return float(np.clip(p, 0.02, 0.98))

    def respond(self, latent: UserLatent, items, rng: np.random.Generator) -> tuple[np.ndarray, int]:
        """Sample clicks for ``items`` and the gap in days until the next visit."""
        noise = self.config.noise
        p_click = self.click_probabilities(latent, items, noise * rng.normal())
        clicks = (rng.uniform(size=len(p_click)) < p_click).astype(np.int64)
        gap = int(rng.geometric(self.return_probability(latent, items, noise * rng.normal())))
        return clicks, gap

    # -- logging policy --------------------------------------------------------

    def exposure_list(self, latent: UserLatent, rng: np.random.Generator) -> np.ndarray:
        c = self.config
        lo = c.N if c.min_list_len is None else c.min_list_len
        length = int(rng.integers(lo, c.N + 1))
        share = float(_clip01(latent.exposure + c.exposure_jitter * rng.normal()))
        pool = self.topic_items[latent.topic]
        # Plackett-Luce over popularity: Gumbel keys give both the sample and its order
        keys = self.log_popularity[pool] + rng.gumbel(size=len(pool))
        ret_mask = self.is_retention[pool]
        n_ret = min(int(rng.binomial(length, share)), int(ret_mask.sum()))
        n_other = min(length - n_ret, int((~ret_mask).sum()))
        n_ret = min(length - n_other, int(ret_mask.sum()))  # top up when one side runs short
        ret_idx = np.flatnonzero(ret_mask)
        oth_idx = np.flatnonzero(~ret_mask)
        chosen = np.concatenate([
            ret_idx[np.argsort(-keys[ret_idx], kind="stable")[:n_ret]],
            oth_idx[np.argsort(-keys[oth_idx], kind="stable")[:n_other]],
        ])
        chosen = chosen[np.argsort(-keys[chosen], kind="stable")]
        return pool[chosen]

    def user_sessions(self, user_id: int, latent: UserLatent | None = None) -> list[SessionRecord]:
        c = self.config
        lat = self.latent(user_id) if latent is None else latent
        rng = np.random.default_rng([c.seed, _SESSIONS, user_id])
        day = int(rng.integers(0, 3))
        out = []
        for _ in range(c.sessions_per_user):
            items = self.exposure_list(lat, rng)
            clicks, gap = self.respond(lat, items, rng)
            out.append(SessionRecord.from_lists(user_id, day, items.tolist(), clicks.tolist()))
            day += gap
        return out

    def log(self, users: list[UserFeatures] | None = None) -> list[SessionRecord]:
        ids = range(self.config.num_users) if users is None else [u.user_id for u in users]
        return [s for u in ids for s in self.user_sessions(u)]

    # -- persistence -----------------------------------------------------------

    def manifest(self, users: list[UserFeatures] | None = None) -> dict:
        users = self.users() if users is None else users
        return {
            "schema": MANIFEST_SCHEMA,
            "seed": self.config.seed,
            "config": self.config.to_dict(),
            "mean_click_prob": self.config.click_prob,
            "retention_items": self.retention_items.tolist(),
            "item_topic": self.item_topic[1:].tolist(),
            "users": [
                {**asdict(u), "latent": asdict(self.latent(u.user_id))} for u in users
            ],
        }

    def write(self, log_path: str | Path, manifest_path: str | Path | None = None) -> Path:
        log_path = Path(log_path)
        users = self.users()
        write_session_log(self.log(users), log_path)
        manifest_path = Path(manifest_path) if manifest_path else manifest_path_for(log_path)
        with open(manifest_path, "w") as fh:
            json.dump(self.manifest(users), fh)
        return manifest_path


def manifest_path_for(log_path: str | Path) -> Path:
    log_path = Path(log_path)
    return log_path.with_name(log_path.stem + ".manifest.json")


def generate_users(config: WorldConfig) -> list[UserFeatures]:
    return SyntheticWorld(config).users()


def generate_log(users: list[UserFeatures], config: WorldConfig) -> list[SessionRecord]:
    if not users:
        raise ValueError("generate_log needs at least one user")
    return SyntheticWorld(config).log(users)


def load_manifest(path: str | Path) -> dict:
    with open(path) as fh:
        man = json.load(fh)
    if man.get("schema") != MANIFEST_SCHEMA:
        raise ValueError(f"{path}: not a {MANIFEST_SCHEMA} manifest")
    return man


def world_from_manifest(manifest: dict) -> SyntheticWorld:
    return SyntheticWorld(WorldConfig.from_dict(manifest["config"]))


def features_from_manifest(manifest: dict) -> dict[int, UserFeatures]:
    return {
        u["user_id"]: UserFeatures(u["user_id"], tuple(u["numeric"]), tuple(u["categorical"]))
        for u in manifest["users"]
    }


def with_latent(latent: UserLatent, **kw) -> UserLatent:
    return replace(latent, **kw)
