"""Training loop, checkpoints and the per-step loss log."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
import torch

from .balancer import balanced_reward_loss
from .config import ModelConfig
from .decision import Batch, DecisionRecommender, collate
from .objectives import contrastive_loss, cross_entropy_loss, select_negatives, total_loss
from .trajectory import Trajectory

logger = logging.getLogger(__name__)

LOG_FIELDS = ("step", "L_cross", "L_contra", "L_br", "total")
CKPT_FILE = "checkpoint.pt"
CONFIG_FILE = "config.json"


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class LossTerms:
    cross: torch.Tensor
    contra: torch.Tensor
    balance: torch.Tensor
    total: torch.Tensor

    def row(self, step: int) -> dict:
        return {
            "step": step,
            "L_cross": self.cross.item(),
            "L_contra": self.contra.item(),
            "L_br": self.balance.item(),
            "total": self.total.item(),
        }


@dataclass
class Checkpoint:
    config: ModelConfig
    model_state: dict
    optimizer_state: dict | None = None
    step: int = 0
    rng_state: dict = field(default_factory=dict)
    history: list[dict] = field(default_factory=list)

    def build_model(self) -> DecisionRecommender:
        model = DecisionRecommender(self.config)
        model.load_state_dict(self.model_state)
        model.eval()
        return model

    def save(self, out_dir: str | Path) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        self.config.save(out_dir / CONFIG_FILE)
        torch.save(
            {
                "config": self.config.to_dict(),
                "model_state": self.model_state,
                "optimizer_state": self.optimizer_state,
                "step": self.step,
                "rng_state": self.rng_state,
                "history": self.history,
            },
            out_dir / CKPT_FILE,
        )
        return out_dir / CKPT_FILE

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        path = Path(path)
        if path.is_dir():
            path = path / CKPT_FILE
        blob = torch.load(path, map_location="cpu", weights_only=False)
        return cls(
            config=ModelConfig.from_dict(blob["config"]),
            model_state=blob["model_state"],
            optimizer_state=blob["optimizer_state"],
            step=blob["step"],
            rng_state=blob["rng_state"],
            history=blob["history"],
        )


def infer_data_config(config: ModelConfig, trajectories: Sequence[Trajectory], features: Mapping | None) -> ModelConfig:
    """Fill vocabulary and feature shapes that the config leaves open."""
    kw = {}
    if config.num_items is None:
        kw["num_items"] = int(max(int(tr.actions.max()) for tr in trajectories))
    if features is not None and (config.n_numeric is None or config.cat_cardinalities is None):
        feats = list(features.values())
        if config.n_numeric is None:
            kw["n_numeric"] = len(feats[0].numeric)
        if config.cat_cardinalities is None:
            kw["cat_cardinalities"] = tuple(int(max(f.categorical[i] for f in feats)) + 1
                                            for i in range(len(feats[0].categorical)))
    return config.replace(**kw) if kw else config


def compute_losses(model: DecisionRecommender, batch: Batch) -> LossTerms:
    c = model.config
    out = model(batch)
    valid = batch.mask
    logits = model.action_logits(out.predicted[valid], batch.actions[valid])
    cross = cross_entropy_loss(logits, batch.actions[valid])

    zero = cross.new_zeros(())
    contra = zero
    if c.effective_alpha > 0:
        neg = select_negatives(batch.rewards, c.theta, valid)
        contra = contrastive_loss(out.predicted[valid], out.action_tokens[neg])

    balance = zero
    if model.balancer is not None:
        balance = balanced_reward_loss(out.balance, batch.rtgs[:, 0], c.gamma)

    total = total_loss(cross, contra, c.effective_alpha, balance, model.balancer is not None,
                       c.balancer_loss_weight)
    return LossTerms(cross, contra, balance, total)


def _seed_everything(seed: int) -> None:
    torch.manual_seed(seed)
    np.random.seed(seed % 2**32)


def train(config: ModelConfig, trajectories: Sequence[Trajectory], features: Mapping | None = None,
          out_dir: str | Path | None = None, log_path: str | Path | None = None,
          callback: Callable[[int, DecisionRecommender, LossTerms], None] | None = None) -> Checkpoint:
    """Minimise the total loss with Adam; returns the final checkpoint.

    Loss components are appended to ``log_path`` (CSV) every ``log_every``
    steps; with ``out_dir`` and ``checkpoint_every`` set, intermediate
    checkpoints go to ``out_dir/step_<n>`` and the final one to ``out_dir``.
    """
    if not trajectories:
        raise ValueError("train needs at least one trajectory")
    config = infer_data_config(config, trajectories, features)
    if not config.disable_balancer and features is None:
        raise ValueError("user features are required unless disable_balancer is set")
    _seed_everything(config.seed)
    model = DecisionRecommender(config)
    model.train()

    data = collate(trajectories, None if config.disable_balancer else features, T=config.T)
    gen = torch.Generator().manual_seed(config.seed)

    balancer_params = list(model.balancer.parameters()) if model.balancer is not None else []
    bal_ids = {id(p) for p in balancer_params}
    main_params = [p for p in model.parameters() if id(p) not in bal_ids]
    groups = [{"params": main_params}] + ([{"params": balancer_params}] if balancer_params else [])
    opt = torch.optim.Adam(groups, lr=config.lr)

    history: list[dict] = []
    log_fh = writer = None
    if log_path is not None:
        log_fh = open(log_path, "w", newline="")
        writer = csv.DictWriter(log_fh, fieldnames=LOG_FIELDS)
        writer.writeheader()
    try:
        for step in range(config.max_steps):
            if data.size > config.batch_size:
                idx = torch.randperm(data.size, generator=gen)[: config.batch_size]
                batch = data.select(idx)
            else:
                batch = data
            terms = compute_losses(model, batch)
            if not math.isfinite(terms.total.item()):
                raise TrainingDiverged(
                    f"non-finite loss at step {step}: L_cross={terms.cross.item()} "
                    f"L_contra={terms.contra.item()} L_br={terms.balance.item()}"
                )
            opt.zero_grad(set_to_none=True)
            terms.total.backward()
            if config.grad_clip > 0:
                # clipped per group: the balancer loss is on a different scale
                torch.nn.utils.clip_grad_norm_(main_params, config.grad_clip)
                if balancer_params:
                    torch.nn.utils.clip_grad_norm_(balancer_params, config.grad_clip)
            opt.step()
            model.items.reset_padding()

            if step % config.log_every == 0 or step == config.max_steps - 1:
                row = terms.row(step)
                history.append(row)
                logger.info("step %d  L_cross=%.4f  L_contra=%.4f  L_br=%.4f", step, row["L_cross"],
                            row["L_contra"], row["L_br"])
                if writer is not None:
                    writer.writerow(row)
            if callback is not None:
                callback(step, model, terms)
            if out_dir is not None and config.checkpoint_every and (step + 1) % config.checkpoint_every == 0:
                _snapshot(model, opt, step + 1, gen, history).save(Path(out_dir) / f"step_{step + 1}")
    finally:
        if log_fh is not None:
            log_fh.close()

    model.eval()
    ckpt = _snapshot(model, opt, config.max_steps, gen, history)
    if out_dir is not None:
        ckpt.save(out_dir)
    return ckpt


def _snapshot(model, opt, step, gen, history) -> Checkpoint:
    return Checkpoint(
        config=model.config,
        model_state={k: v.detach().clone() for k, v in model.state_dict().items()},
        optimizer_state=opt.state_dict(),
        step=step,
        rng_state={"torch": torch.get_rng_state(), "sampler": gen.get_state()},
        history=list(history),
    )


def read_loss_log(path: str | Path) -> list[dict]:
    with open(path) as fh:
        return [{k: (int(v) if k == "step" else float(v)) for k, v in row.items()} for row in csv.DictReader(fh)]


def split_users(trajectories: Sequence[Trajectory], val_fraction: float) -> tuple[list[Trajectory], list[Trajectory]]:
    """Hold out the last ``val_fraction`` of users (by id)."""
    users = sorted({tr.user_id for tr in trajectories})
    n_val = int(round(len(users) * val_fraction))
    held = set(users[len(users) - n_val:]) if n_val else set()
    train_set = [tr for tr in trajectories if tr.user_id not in held]
    val_set = [tr for tr in trajectories if tr.user_id in held]
    return train_set, val_set

