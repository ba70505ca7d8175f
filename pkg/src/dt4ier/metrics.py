"""List-level accuracy and retention metrics.

Recommendation lists are treated as token sequences.  Predictions are
deduplicated (first occurrence kept) and padding ids are stripped before any
metric is computed.
"""

from __future__ import annotations

import math
from collections import Counter
from typing import Sequence

import numpy as np

from .trajectory import PAD_ID

NUM_CLASSES = 8


def clean(seq: Sequence[int], dedupe: bool = False) -> list[int]:
    out = [int(x) for x in seq if int(x) != PAD_ID]
    if dedupe:
        out = list(dict.fromkeys(out))
    return out


def _ngrams(seq, n):
    return Counter(tuple(seq[i:i + n]) for i in range(len(seq) - n + 1))


def bleu(pred: Sequence[int], truth: Sequence[int], max_order: int = 4) -> float:
    """Sentence BLEU with add-one smoothing of empty higher-order matches."""
    pred, truth = clean(pred, dedupe=True), clean(truth)
    if not pred or not truth:
        return 0.0
    log_p = 0.0
    orders = min(max_order, len(pred))
    for n in range(1, orders + 1):
        ref = _ngrams(truth, n)
        hyp = _ngrams(pred, n)
        matched = sum(min(c, ref[g]) for g, c in hyp.items())
        total = len(pred) - n + 1
        if matched == 0:
            if n == 1:
                return 0.0
            log_p += math.log(1.0 / (total + 1))
        else:
            log_p += math.log(matched / total)
    bp = min(1.0, math.exp(1.0 - len(truth) / len(pred)))
    return bp * math.exp(log_p / orders)


def rouge(pred: Sequence[int], truth: Sequence[int]) -> float:
    """ROUGE-1 recall."""
    pred, truth = clean(pred, dedupe=True), clean(truth)
    if not truth:
        raise ValueError("rouge needs a non-empty truth list")
    ref, hyp = Counter(truth), Counter(pred)
    return sum(min(c, hyp[g]) for g, c in ref.items()) / len(truth)


def hr_at_k(pred: Sequence[int], truth: Sequence[int], k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    pred, truth = clean(pred, dedupe=True), set(clean(truth))
    if not truth:
        return 0.0
    hits = sum(1 for x in pred[:k] if x in truth)
    return hits / min(k, len(truth))


def ndcg_at_k(pred: Sequence[int], truth: Sequence[int], k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    pred, truth = clean(pred, dedupe=True), set(clean(truth))
    if not truth:
        return 0.0
    dcg = sum(1.0 / math.log2(r + 2) for r, x in enumerate(pred[:k]) if x in truth)
    idcg = sum(1.0 / math.log2(r + 2) for r in range(min(k, len(truth))))
    return dcg / idcg


def reward_class(r: float, num_classes: int = NUM_CLASSES) -> int:
    """Uniform bins over [0, 1]; the top edge belongs to the last class."""
    return min(num_classes - 1, int(math.floor(r * num_classes)))


def class_midpoint(c: int, num_classes: int = NUM_CLASSES) -> float:
    return (c + 0.5) / num_classes


def sb_urs(groups: Sequence[tuple[float, float, int]]) -> float:
    """Similarity-based user return score from per-class ``(sim_c, r_c, N_c)``."""
    if len(groups) != NUM_CLASSES:
        raise ValueError(f"sb_urs needs exactly {NUM_CLASSES} classes, got {len(groups)}")
    return float(sum(sim * (r - 0.5) * n for sim, r, n in groups))


def sb_urs_groups(similarities: Sequence[float], retention: Sequence[float]) -> list[tuple[float, float, int]]:
    """Group samples by retention class; ``sim_c`` is the class mean similarity."""
    sims = np.asarray(similarities, dtype=np.float64)
    cls = np.array([reward_class(r) for r in retention], dtype=np.int64)
    groups = []
    for c in range(NUM_CLASSES):
        sel = cls == c
        n = int(sel.sum())
        groups.append((float(sims[sel].mean()) if n else 0.0, class_midpoint(c), n))
    return groups


def evaluate_lists(preds, truths, retention, k: int = 10) -> dict:
    """Mean BLEU/ROUGE/HR@k/NDCG@k plus SB-URS over paired lists."""
    if len(preds) == 0:
        raise ValueError("no predictions to evaluate")
    bleus = [bleu(p, t) for p, t in zip(preds, truths)]
    groups = sb_urs_groups(bleus, retention)
    return {
        "bleu": float(np.mean(bleus)),
        "rouge": float(np.mean([rouge(p, t) for p, t in zip(preds, truths)])),
        f"hr@{k}": float(np.mean([hr_at_k(p, t, k) for p, t in zip(preds, truths)])),
        f"ndcg@{k}": float(np.mean([ndcg_at_k(p, t, k) for p, t in zip(preds, truths)])),
        "sb_urs": sb_urs(groups),
        "sb_urs_classes": [
            {"class": c, "sim": s, "r": r, "n": n} for c, (s, r, n) in enumerate(groups)
        ],
    }
