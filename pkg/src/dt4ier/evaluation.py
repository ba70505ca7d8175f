"""Prompted evaluation, the RTG prompting sweep and report files."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Mapping, Sequence

import jsonschema
import numpy as np
import torch

from .decision import DecisionRecommender, collate, prompt_rtg, rollout_many, prompted_rtgs
from .metrics import NUM_CLASSES, evaluate_lists
from .training import Checkpoint
from .trajectory import Trajectory

DEFAULT_SWEEP = (0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "MetricsReport",
    "type": "object",
    "required": ["metrics", "sb_urs_classes", "counts", "rho", "k", "mode", "config_hash", "seed"],
    "properties": {
        "metrics": {
            "type": "object",
            "required": ["bleu", "rouge", "hr@k", "ndcg@k", "sb_urs"],
            "properties": {
                "bleu": {"type": "number", "minimum": 0, "maximum": 1},
                "rouge": {"type": "number", "minimum": 0, "maximum": 1},
                "hr@k": {"type": "number", "minimum": 0, "maximum": 1},
                "ndcg@k": {"type": "number", "minimum": 0, "maximum": 1},
                "sb_urs": {"type": "number"},
            },
            "additionalProperties": False,
        },
        "sb_urs_classes": {
            "type": "array",
            "minItems": NUM_CLASSES,
            "maxItems": NUM_CLASSES,
            "items": {
                "type": "object",
                "required": ["class", "sim", "r", "n"],
                "properties": {
                    "class": {"type": "integer", "minimum": 0, "maximum": NUM_CLASSES - 1},
                    "sim": {"type": "number"},
                    "r": {"type": "number"},
                    "n": {"type": "integer", "minimum": 0},
                },
            },
        },
        "counts": {
            "type": "object",
            "required": ["trajectories", "sessions"],
            "properties": {
                "trajectories": {"type": "integer", "minimum": 1},
                "sessions": {"type": "integer", "minimum": 1},
            },
        },
        "rho": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "k": {"type": "integer", "minimum": 1},
        "mode": {"enum": ["teacher", "free"]},
        "config_hash": {"type": "string"},
        "seed": {"type": "integer"},
    },
}


def _pair(rho) -> tuple[float, float]:
    rs, rl = (rho, rho) if np.isscalar(rho) else rho
    return float(rs), float(rl)


def _as_model(model_or_ckpt) -> DecisionRecommender:
    if isinstance(model_or_ckpt, Checkpoint):
        return model_or_ckpt.build_model()
    return model_or_ckpt


@torch.no_grad()
def predict_sessions(model, trajectories: Sequence[Trajectory], features: Mapping | None = None,
                     rho=None, batch_size: int = 64) -> list[list[np.ndarray]]:
    """Greedy item lists for every session, history teacher-forced from the log.

    With ``rho`` set, every RTG token is the prompt ``rho * remaining``
    (the per-step rate ``rho`` assumed for each session); with ``rho=None``
    the logged RTGs are used.
    """
    model = _as_model(model)
    model.eval()
    feats = None if model.balancer is None else features
    out: list[list[np.ndarray]] = []
    for lo in range(0, len(trajectories), batch_size):
        chunk = trajectories[lo:lo + batch_size]
        batch = collate(chunk, feats, dtype=model.items.weight.dtype)
        rtgs = None if rho is None else prompted_rtgs(batch, _pair(rho))
        pred = model(batch, rtgs).predicted
        items = model.decode(pred[batch.mask]).numpy()
        k = 0
        for tr in chunk:
            out.append([items[k + t] for t in range(tr.length)])
            k += tr.length
    return out


def free_rollouts(model, trajectories, features=None, rho=1.0, world=None, seed: int = 0):
    """Free-running rollouts from session 0 (the first state is the logged one)."""
    model = _as_model(model)
    rho = _pair(rho)
    rng = np.random.default_rng(seed)
    prompts = [prompt_rtg(rho, tr.length) for tr in trajectories]
    return [r.actions for r in rollout_many(model, trajectories, 0, prompts, features, world, rng)]


def evaluate(model_or_ckpt, trajectories: Sequence[Trajectory], rho, features: Mapping | None = None,
             k: int | None = None, mode: str = "teacher", world=None, seed: int = 0) -> dict:
    """Metrics report for prompted recommendations against the logged lists."""
    if not trajectories:
        raise ValueError("empty evaluation set")
    rs, rl = _pair(rho)
    if not (0 < rs <= 1 and 0 < rl <= 1):
        raise ValueError(f"prompt proportion {rho} outside (0, 1]")
    model = _as_model(model_or_ckpt)
    k = model.config.k if k is None else k
    if mode == "teacher":
        preds = predict_sessions(model, trajectories, features, (rs, rl))
    elif mode == "free":
        preds = free_rollouts(model, trajectories, features, (rs, rl), world, seed)
    else:
        raise ValueError(f"unknown evaluation mode {mode!r}")

    flat_pred, flat_truth, retention = [], [], []
    for tr, p in zip(trajectories, preds):
        rew = tr.reward_array()
        for t, items in enumerate(p):
            flat_pred.append(items)
            flat_truth.append(tr.actions[t])
            retention.append(rew[t, 1])
    m = evaluate_lists(flat_pred, flat_truth, retention, k)
    classes = m.pop("sb_urs_classes")
    metrics = {
        "bleu": m["bleu"], "rouge": m["rouge"], "hr@k": m[f"hr@{k}"], "ndcg@k": m[f"ndcg@{k}"],
        "sb_urs": m["sb_urs"],
    }
    return {
        "metrics": metrics,
        "sb_urs_classes": classes,
        "counts": {"trajectories": len(trajectories), "sessions": len(flat_pred)},
        "rho": [rs, rl],
        "k": k,
        "mode": mode,
        "config_hash": model.config.digest(),
        "seed": model.config.seed,
    }


def validate_report(report: dict) -> None:
    jsonschema.validate(report, REPORT_SCHEMA)


def save_report(report: dict, path: str | Path) -> None:
    validate_report(report)
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2)


def load_report(path: str | Path) -> dict:
    with open(path) as fh:
        report = json.load(fh)
    validate_report(report)
    return report


SWEEP_COLUMNS = ("rho", "bleu", "rouge", "hr@k", "ndcg@k", "sb_urs")


def rtg_sweep(model_or_ckpt, trajectories: Sequence[Trajectory], rhos: Sequence[float] = DEFAULT_SWEEP,
              features: Mapping | None = None, csv_path: str | Path | None = None,
              json_path: str | Path | None = None, **kw) -> list[dict]:
    """One :func:`evaluate` per prompt proportion; rows of ``rho`` plus the five metrics."""
    if any(not 0 < r <= 1 for r in rhos):
        raise ValueError("prompt proportions must lie in (0, 1]")
    model = _as_model(model_or_ckpt)
    rows = []
    for rho in rhos:
        rep = evaluate(model, trajectories, rho, features, **kw)
        rows.append({"rho": float(rho), **rep["metrics"]})
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
            w.writeheader()
            w.writerows(rows)
    if json_path is not None:
        series = {col: [r[col] for r in rows] for col in SWEEP_COLUMNS if col != "rho"}
        with open(json_path, "w") as fh:
            json.dump({"x": [r["rho"] for r in rows], "xlabel": "RTG proportion", "series": series}, fh, indent=2)
    return rows


def format_report(report: dict) -> str:
    """Fixed-width text table of a metrics report."""
    lines = [f"mode={report['mode']}  rho={report['rho']}  k={report['k']}  "
             f"sessions={report['counts']['sessions']}  config={report['config_hash']}"]
    lines.append(f"{'metric':<10}{'value':>14}")
    for name, val in report["metrics"].items():
        lines.append(f"{name:<10}{val:>14.4f}")
    lines.append("")
    lines.append(f"{'class':<7}{'r_c':>7}{'N_c':>8}{'sim_c':>9}")
    for row in report["sb_urs_classes"]:
        lines.append(f"{row['class']:<7}{row['r']:>7.4f}{row['n']:>8d}{row['sim']:>9.4f}")
    return "\n".join(lines)


def retention_share(predictions: list[list[np.ndarray]], is_retention: np.ndarray) -> float:
    """Mean fraction of recommended items inside the retention-linked subset."""
    return float(np.mean([is_retention[p[p > 0]].mean() for ps in predictions for p in ps]))
