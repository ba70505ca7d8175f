"""Independent reference implementations used by the tests.

They are written from the definitions with plain loops and share no code
with the package.
"""

import math


def _strip(seq, dedupe):
    out = []
    for x in seq:
        x = int(x)
        if x == 0:
            continue
        if dedupe and x in out:
            continue
        out.append(x)
    return out


def _count(grams, g):
    return sum(1 for h in grams if h == g)


def bleu_ref(pred, truth, max_order=4):
    pred, truth = _strip(pred, True), _strip(truth, False)
    if not pred or not truth:
        return 0.0
    orders = min(max_order, len(pred))
    precisions = []
    for n in range(1, orders + 1):
        hyp = [tuple(pred[i:i + n]) for i in range(len(pred) - n + 1)]
        ref = [tuple(truth[i:i + n]) for i in range(len(truth) - n + 1)]
        matched = 0
        for g in set(hyp):
            matched += min(_count(hyp, g), _count(ref, g))
        if matched == 0 and n == 1:
            return 0.0
        if matched == 0:
            precisions.append(1.0 / (len(hyp) + 1))
        else:
            precisions.append(matched / len(hyp))
    geo = 1.0
    for p in precisions:
        geo *= p
    geo = geo ** (1.0 / orders)
    bp = 1.0 if len(pred) >= len(truth) else math.exp(1 - len(truth) / len(pred))
    return bp * geo


def rouge_ref(pred, truth):
    pred, truth = _strip(pred, True), _strip(truth, False)
    hits = 0
    for g in set(truth):
        hits += min(truth.count(g), pred.count(g))
    return hits / len(truth)


def hr_ref(pred, truth, k):
    pred, truth = _strip(pred, True), _strip(truth, False)
    if not truth:
        return 0.0
    rel = set(truth)
    return len([x for x in pred[:k] if x in rel]) / min(k, len(rel))


def ndcg_ref(pred, truth, k):
    pred, truth = _strip(pred, True), _strip(truth, False)
    rel = set(truth)
    if not rel:
        return 0.0
    dcg = 0.0
    for rank, x in enumerate(pred[:k], start=1):
        if x in rel:
            dcg += 1 / math.log2(rank + 1)
    ideal = 0.0
    for rank in range(1, min(k, len(rel)) + 1):
        ideal += 1 / math.log2(rank + 1)
    return dcg / ideal


def sb_urs_flat(sims, retention, classes=8):
    """Ungrouped form: each sample adds class-mean similarity times its class weight."""
    cls = [min(classes - 1, int(r * classes)) for r in retention]
    total = 0.0
    for c in range(classes):
        members = [s for s, k in zip(sims, cls) if k == c]
        if not members:
            continue
        mean = sum(members) / len(members)
        mid = (2 * c + 1) / (2 * classes)
        for _ in members:
            total += mean * (mid - 0.5)
    return total


def suffix_sums(values):
    out = []
    for t in range(len(values)):
        acc = 0
        for v in values[t:]:
            acc = acc + v
        out.append(acc)
    return out


def gru_recurrence(x, w_ih, w_hh, b_ih, b_hh):
    """Step-by-step GRU over rows of ``x`` (torch's gate layout r, z, n), numpy in and out."""
    import numpy as np

    d = w_hh.shape[1]
    h = np.zeros(d)
    sig = lambda v: 1 / (1 + np.exp(-v))  # noqa: E731
    for row in x:
        gi = w_ih @ row + b_ih
        gh = w_hh @ h + b_hh
        r = sig(gi[:d] + gh[:d])
        z = sig(gi[d:2 * d] + gh[d:2 * d])
        n = np.tanh(gi[2 * d:] + r * gh[2 * d:])
        h = (1 - z) * n + z * h
    return h


def central_fd(f, params, eps=1e-4):
    """Central finite-difference gradients of scalar ``f()`` w.r.t. each float64 tensor in ``params``."""
    import torch

    grads = []
    with torch.no_grad():
        for p in params:
            g = torch.zeros_like(p)
            flat, gflat = p.view(-1), g.view(-1)
            for i in range(flat.numel()):
                old = flat[i].item()
                flat[i] = old + eps
                up = float(f())
                flat[i] = old - eps
                down = float(f())
                flat[i] = old
                gflat[i] = (up - down) / (2 * eps)
            grads.append(g)
    return grads


def rel_error(a, b):
    import torch

    num = (a - b).abs().max().item()
    den = max(a.abs().max().item(), b.abs().max().item(), 1e-8)
    return num / den
