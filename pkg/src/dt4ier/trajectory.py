"""Session logs, rewards, returns-to-go and fixed-shape trajectories.

Rewards are kept as exact rationals (``fractions.Fraction``) so that the
return-to-go bookkeeping telescopes exactly; float arrays for the model are
derived on demand.
"""

from __future__ import annotations

import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Real
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

PAD_ID = 0
TRAJ_SCHEMA = "traj-v1"


class LogFormatError(ValueError):
    """Raised when a session log line cannot be parsed."""


@dataclass(frozen=True)
class Interaction:
    item_id: int
    clicked: bool
    position: int


@dataclass(frozen=True)
class SessionRecord:
    user_id: int
    day: int
    interactions: tuple[Interaction, ...]

    @classmethod
    def from_lists(cls, user_id: int, day: int, items: Sequence[int], clicks: Sequence[int]) -> "SessionRecord":
        if len(items) != len(clicks):
            raise ValueError("items and clicks differ in length")
        inter = tuple(Interaction(int(i), bool(c), p) for p, (i, c) in enumerate(zip(items, clicks)))
        return cls(int(user_id), int(day), inter)

    @property
    def items(self) -> list[int]:
        return [x.item_id for x in self.interactions]

    @property
    def clicks(self) -> list[int]:
        return [int(x.clicked) for x in self.interactions]

    def to_json(self) -> dict:
        return {"user_id": self.user_id, "day": self.day, "items": self.items, "clicks": self.clicks}


@dataclass(frozen=True)
class RewardPair:
    r_s: Real
    r_l: Real

    def __post_init__(self):
        for v in (self.r_s, self.r_l):
            if not 0 <= v <= 1:
                raise ValueError(f"reward component {v} outside [0, 1]")


@dataclass(frozen=True)
class RtgPair:
    R_s: Real
    R_l: Real


def compute_ctr(session: SessionRecord) -> Fraction:
    n = len(session.interactions)
    if n == 0:
        raise ValueError("empty session")
    return Fraction(sum(x.clicked for x in session.interactions), n)


def compute_retention_reward(session: SessionRecord, next_day: int | None) -> Fraction:
    """Reciprocal of the gap (in days) until the user's next session; 0 if none."""
    if next_day is None:
        return Fraction(0)
    if next_day <= session.day:
        raise ValueError("non-causal return")
    return Fraction(1, next_day - session.day)


def compute_rtg(rewards: Sequence[RewardPair]) -> list[RtgPair]:
    """Undiscounted suffix sums of both reward channels."""
    if len(rewards) == 0:
        raise ValueError("compute_rtg needs at least one reward")
    out = []
    acc_s, acc_l = 0, 0
    for r in reversed(rewards):
        acc_s = acc_s + r.r_s
        acc_l = acc_l + r.r_l
        out.append(RtgPair(acc_s, acc_l))
    out.reverse()
    return out


def build_state(click_history: Sequence[int], H: int) -> np.ndarray:
    """Most recent ``H`` clicked items, right-aligned and left zero-padded."""
    if H < 1:
        raise ValueError("H must be >= 1")
    state = np.zeros(H, dtype=np.int64)
    recent = [int(i) for i in click_history if i != PAD_ID][-H:]
    if recent:
        state[H - len(recent):] = recent
    return state


@dataclass(eq=False)
class Trajectory:
    """One user's window of sessions: states (T, H), actions (T, N), rewards, RTGs."""

    user_id: int
    states: np.ndarray
    actions: np.ndarray
    rewards: tuple[RewardPair, ...]
    rtgs: tuple[RtgPair, ...]
    days: tuple[int, ...] = field(default=())

    def __post_init__(self):
        T = len(self.rewards)
        if not (self.states.shape[0] == self.actions.shape[0] == len(self.rtgs) == T):
            raise ValueError("trajectory arrays disagree on length")

    @property
    def length(self) -> int:
        return len(self.rewards)

    @property
    def H(self) -> int:
        return self.states.shape[1]

    @property
    def N(self) -> int:
        return self.actions.shape[1]

    def reward_array(self) -> np.ndarray:
        return np.array([[float(r.r_s), float(r.r_l)] for r in self.rewards], dtype=np.float64)

    def rtg_array(self) -> np.ndarray:
        return np.array([[float(r.R_s), float(r.R_l)] for r in self.rtgs], dtype=np.float64)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            self.user_id == other.user_id
            and np.array_equal(self.states, other.states)
            and np.array_equal(self.actions, other.actions)
            and self.rewards == other.rewards
            and self.rtgs == other.rtgs
            and self.days == other.days
        )

    def __repr__(self) -> str:
        return f"Trajectory(user_id={self.user_id}, T={self.length}, H={self.H}, N={self.N})"


def parse_session(line: str, lineno: int, N: int | None = None) -> SessionRecord:
    try:
        rec = json.loads(line)
        items, clicks = rec["items"], rec["clicks"]
        user_id, day = rec["user_id"], rec["day"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise LogFormatError(f"line {lineno}: malformed session record ({exc})") from exc
    if not isinstance(items, list) or not isinstance(clicks, list) or len(items) != len(clicks):
        raise LogFormatError(f"line {lineno}: items/clicks must be equal-length lists")
    if not all(isinstance(v, int) and not isinstance(v, bool) for v in (user_id, day)) or day < 0:
        raise LogFormatError(f"line {lineno}: user_id/day must be integers, day >= 0")
    if any(not isinstance(i, int) or i < 1 for i in items):
        raise LogFormatError(f"line {lineno}: item ids must be positive integers")
    if any(c not in (0, 1) for c in clicks):
        raise LogFormatError(f"line {lineno}: clicks must be 0/1")
    if N is not None and len(items) > N:
        raise LogFormatError(f"line {lineno}: {len(items)} items exceeds N={N}")
    return SessionRecord.from_lists(user_id, day, items, clicks)


def read_session_log(path: str | Path, N: int | None = None) -> list[SessionRecord]:
    sessions = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            sessions.append(parse_session(line, lineno, N))
    return sessions


def write_session_log(sessions: Iterable[SessionRecord], path: str | Path) -> None:
    with open(path, "w") as fh:
        for s in sessions:
            fh.write(json.dumps(s.to_json()) + "\n")


def build_trajectories(sessions: Iterable[SessionRecord], T: int = 20, H: int = 30, N: int = 30) -> list[Trajectory]:
    """Group sessions by user, order by day and cut non-overlapping windows of ``T``."""
    by_user: dict[int, list[SessionRecord]] = defaultdict(list)
    for s in sessions:
        if not s.interactions:
            logger.warning("dropping empty session user=%d day=%d", s.user_id, s.day)
            continue
        if len(s.interactions) > N:
            raise ValueError(f"session user={s.user_id} day={s.day} has more than N={N} items")
        by_user[s.user_id].append(s)

    out = []
    for user_id in sorted(by_user):
        user_sessions = sorted(by_user[user_id], key=lambda s: s.day)
        days = [s.day for s in user_sessions]
        for a, b in zip(days, days[1:]):
            if a == b:
                raise ValueError(f"duplicate (user, day) = ({user_id}, {a})")
        out.extend(_user_trajectories(user_id, user_sessions, T, H, N))
    return out


def _user_trajectories(user_id, sessions, T, H, N):
    n = len(sessions)
    rewards, states, actions = [], [], []
    history: list[int] = []
    for k, s in enumerate(sessions):
        next_day = sessions[k + 1].day if k + 1 < n else None
        rewards.append(RewardPair(compute_ctr(s), compute_retention_reward(s, next_day)))
        states.append(build_state(history, H))
        act = np.zeros(N, dtype=np.int64)
        act[: len(s.interactions)] = s.items
        actions.append(act)
        # teacher forcing: the state advances with the logged clicks
        history.extend(x.item_id for x in s.interactions if x.clicked)
        if len(history) > H:
            history = history[-H:]

    trajs = []
    for start in range(0, n, T):
        stop = min(start + T, n)
        rw = tuple(rewards[start:stop])
        trajs.append(
            Trajectory(
                user_id=user_id,
                states=np.stack(states[start:stop]),
                actions=np.stack(actions[start:stop]),
                rewards=rw,
                rtgs=tuple(compute_rtg(rw)),
                days=tuple(s.day for s in sessions[start:stop]),
            )
        )
    return trajs


def ingest_log(path: str | Path, T: int = 20, H: int = 30, N: int = 30) -> list[Trajectory]:
    """Read a JSONL session log and window it into trajectories."""
    return build_trajectories(read_session_log(path, N), T=T, H=H, N=N)


def _frac(v) -> str:
    v = Fraction(v)
    return f"{v.numerator}/{v.denominator}"


def save_trajectories(trajs: Iterable[Trajectory], path: str | Path) -> None:
    """Trajectory cache: one trajectory per line, tagged with the cache schema."""
    with open(path, "w") as fh:
        for tr in trajs:
            rec = {
                "schema": TRAJ_SCHEMA,
                "user_id": tr.user_id,
                "days": list(tr.days),
                "states": tr.states.tolist(),
                "actions": tr.actions.tolist(),
                "rewards": [[_frac(r.r_s), _frac(r.r_l)] for r in tr.rewards],
                "rtgs": [[_frac(r.R_s), _frac(r.R_l)] for r in tr.rtgs],
            }
            fh.write(json.dumps(rec) + "\n")


def load_trajectories(path: str | Path) -> list[Trajectory]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec.get("schema") != TRAJ_SCHEMA:
                raise LogFormatError(f"line {lineno}: expected schema {TRAJ_SCHEMA!r}")
            out.append(
                Trajectory(
                    user_id=rec["user_id"],
                    states=np.asarray(rec["states"], dtype=np.int64),
                    actions=np.asarray(rec["actions"], dtype=np.int64),
                    rewards=tuple(RewardPair(Fraction(a), Fraction(b)) for a, b in rec["rewards"]),
                    rtgs=tuple(RtgPair(Fraction(a), Fraction(b)) for a, b in rec["rtgs"]),
                    days=tuple(rec["days"]),
                )
            )
    return out

