import math
import random

import pytest
import torch
from hypothesis import given, strategies as st

from dt4ier.objectives import contrastive_loss, cross_entropy_loss, select_negatives, total_loss
from oracles import central_fd, rel_error


def test_select_negatives_examples():
    r = torch.tensor([[[0.5, 0.5], [0.7, 0.1], [0.1, 0.6]]])
    assert select_negatives(r, 0.6).tolist() == [[True, False, False]]
    valid = torch.tensor([[False, True, True]])
    assert select_negatives(r, 0.6, valid).tolist() == [[False, False, False]]


def test_select_negatives_matches_filter():
    rng = random.Random(0)
    rewards = torch.tensor([[[rng.random(), rng.random()] for _ in range(7)] for _ in range(5)])
    mask = select_negatives(rewards, 0.6)
    for b in range(5):
        for t in range(7):
            rs, rl = rewards[b, t].tolist()
            assert bool(mask[b, t]) == (rs < 0.6 and rl < 0.6)


def test_select_negatives_thresholds():
    r = torch.rand(4, 6, 2)
    assert not select_negatives(r, 0.0).any()
    assert torch.equal(select_negatives(r, 1 + 1e-9), (r < 1).all(-1))


def test_contrastive_examples():
    p = torch.randn(3, 4)
    assert contrastive_loss(p, torch.empty(0, 4)).item() == 0.0
    u = torch.tensor([[1.0, 0.0, 0.0]])
    assert contrastive_loss(u, u).item() == pytest.approx(1.0)
    assert contrastive_loss(u, torch.tensor([[0.0, 2.0, 0.0]])).item() == pytest.approx(0.0)
    assert contrastive_loss(u, torch.zeros(1, 3)).item() == 0.0


def test_contrastive_mean_over_pairs():
    p = torch.randn(3, 5)
    n = torch.randn(4, 5)
    ref = sum(torch.cosine_similarity(a, b, dim=0) for a in p for b in n) / 12
    assert contrastive_loss(p, n).item() == pytest.approx(ref.item(), abs=1e-6)


@given(st.floats(0.01, 100), st.floats(0.01, 100))
def test_contrastive_scale_invariance(a, b):
    torch.manual_seed(0)
    p, n = torch.randn(3, 4, dtype=torch.float64), torch.randn(2, 4, dtype=torch.float64)
    assert abs(contrastive_loss(a * p, b * n).item() - contrastive_loss(p, n).item()) < 1e-6


def test_contrastive_negatives_are_constants():
    p = torch.randn(2, 4, requires_grad=True)
    n = torch.randn(3, 4, requires_grad=True)
    contrastive_loss(p, n).backward()
    assert p.grad is not None and n.grad is None


def test_cross_entropy_examples():
    truth = torch.tensor([[1, 2]])
    sure = torch.full((1, 2, 4), -1e4)
    sure[0, 0, 1] = sure[0, 1, 2] = 0
    assert cross_entropy_loss(sure, truth).item() == pytest.approx(0.0, abs=1e-6)
    assert cross_entropy_loss(torch.zeros(1, 2, 4), truth).item() == pytest.approx(math.log(4))


def test_cross_entropy_matches_log_softmax_oracle():
    torch.manual_seed(1)
    logits = torch.randn(3, 5)
    truth = torch.tensor([1, 4, 2])
    ref = 0.0
    for i in range(3):
        z = logits[i].tolist()
        ref -= z[truth[i]] - math.log(sum(math.exp(v) for v in z))
    assert cross_entropy_loss(logits, truth).item() == pytest.approx(ref / 3, abs=1e-6)


def test_cross_entropy_masking(caplog):
    logits = torch.randn(2, 3, 6)
    truth = torch.tensor([[1, 0, 0], [2, 3, 0]])
    full = cross_entropy_loss(logits, truth)
    keep = truth != 0
    ref = -torch.log_softmax(logits, -1).gather(-1, truth[..., None])[..., 0][keep].mean()
    assert full.item() == pytest.approx(ref.item(), abs=1e-6)
    part = cross_entropy_loss(logits, truth, torch.tensor([True, False]))
    assert part.item() == pytest.approx(-torch.log_softmax(logits[0, 0], -1)[1].item(), abs=1e-6)
    assert cross_entropy_loss(logits, torch.zeros(2, 3, dtype=torch.long)).item() == 0.0
    assert "masked" in caplog.text


@given(st.integers(0, 10_000))
def test_cross_entropy_nonnegative(seed):
    g = torch.Generator().manual_seed(seed)
    logits = torch.randn(4, 7, generator=g) * 5
    truth = torch.randint(0, 7, (4,), generator=g)
    assert cross_entropy_loss(logits, truth).item() >= 0 or not (truth != 0).any()


def test_total_loss_examples():
    assert total_loss(torch.tensor(2.0), torch.tensor(-0.5), 0.0).item() == 2.0
    assert total_loss(torch.tensor(2.0), torch.tensor(-0.5), 0.1).item() == pytest.approx(1.95)
    assert total_loss(torch.tensor(2.0), torch.tensor(-0.5), 0.1, torch.tensor(3.0)).item() == pytest.approx(4.95)
    assert total_loss(torch.tensor(2.0), 0.0, 0.1, torch.tensor(3.0), include_balancer=False).item() == 2.0
    with pytest.raises(ValueError):
        total_loss(torch.tensor(1.0), 0.0, -1.0)


def test_fd_gradients_of_each_loss():
    torch.manual_seed(3)
    logits = torch.randn(2, 3, 10, dtype=torch.float64)
    truth = torch.tensor([[1, 4, 0], [9, 2, 3]])
    p = torch.randn(4, 4, dtype=torch.float64)
    n = torch.randn(3, 4, dtype=torch.float64)
    for f, params in (
        (lambda: cross_entropy_loss(logits, truth), [logits]),
        (lambda: contrastive_loss(p, n), [p]),
        (lambda: total_loss(cross_entropy_loss(logits, truth), contrastive_loss(p, n), 0.1), [logits, p]),
    ):
        for q in params:
            q.requires_grad_()
        analytic = torch.autograd.grad(f(), params)
        for q in params:
            q.requires_grad_(False)
        for a, b in zip(analytic, central_fd(f, params)):
            assert rel_error(a, b) < 1e-3
