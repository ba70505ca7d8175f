import pytest
import torch

from dt4ier.codec import ActionDecoder, ItemEmbedding, SequenceEncoder, encode_sequence
from dt4ier.trajectory import PAD_ID
from oracles import central_fd, gru_recurrence, rel_error


@pytest.fixture
def table():
    return ItemEmbedding(10, 4)


def test_padding_row_zero_and_reset(table):
    assert torch.count_nonzero(table.weight[PAD_ID]) == 0
    with torch.no_grad():
        table.weight[PAD_ID] += 1
    table.reset_padding()
    assert torch.count_nonzero(table.weight[PAD_ID]) == 0


def test_encoder_shape_and_id_check(table):
    enc = SequenceEncoder(4)
    items = torch.randint(0, 11, (2, 5, 7))
    assert enc(items, table).shape == (2, 5, 4)
    with pytest.raises(ValueError):
        enc(torch.tensor([[11]]), table)


def test_all_padding_zero_bias_gives_zero(table):
    enc = SequenceEncoder(4)
    for name, p in enc.gru.named_parameters():
        if "bias" in name:
            torch.nn.init.zeros_(p)
    out = encode_sequence(torch.zeros(3, 6, dtype=torch.long), table, enc)
    assert torch.count_nonzero(out) == 0


def test_encoder_matches_hand_rolled_recurrence(table):
    enc = SequenceEncoder(4).double()
    table = table.double()
    items = torch.tensor([3, 7, 1])
    x = table(items).detach().numpy()
    g = enc.gru
    ref = gru_recurrence(x, *(t.detach().numpy() for t in (g.weight_ih_l0, g.weight_hh_l0, g.bias_ih_l0, g.bias_hh_l0)))
    assert torch.allclose(enc(items[None], table)[0], torch.from_numpy(ref), atol=1e-6)


def test_encoder_sensitivity(table):
    enc = SequenceEncoder(4)
    a = enc(torch.tensor([[0, 0, 3, 4]]), table)
    b = enc(torch.tensor([[0, 0, 3, 5]]), table)
    assert not torch.allclose(a, b)


def test_encoder_gradient_wrt_embeddings_fd():
    table = ItemEmbedding(6, 4).double()
    enc = SequenceEncoder(4).double()
    items = torch.tensor([[1, 2, 0, 5]])
    w = torch.randn(4, dtype=torch.float64)
    f = lambda: (enc(items, table) * w).sum()  # noqa: E731
    (analytic,) = torch.autograd.grad(f(), [table.weight])
    (numeric,) = central_fd(f, [table.weight])
    numeric[PAD_ID] = analytic[PAD_ID]  # padding row has no gradient by construction
    assert rel_error(analytic, numeric) < 1e-3


def test_decoder_shapes_and_first_position(table):
    dec = ActionDecoder(4)
    A = torch.randn(3, 4)
    truth = torch.randint(1, 11, (3, 5))
    logits = dec.decode_action(A, table, "teacher", truth=truth)
    assert logits.shape == (3, 5, 11)
    other = dec.teacher(A, torch.randint(1, 11, (3, 5)), table)
    assert torch.allclose(logits[:, 0], other[:, 0])
    assert dec.decode_action(A, table, "greedy", N=5).shape == (3, 5, 11)
    with pytest.raises(ValueError):
        dec.decode_action(A, table, "teacher")
    with pytest.raises(ValueError):
        dec.decode_action(A, table, "beam", N=5)


def test_greedy_deterministic_never_pad_no_repeats(table):
    dec = ActionDecoder(4)
    with torch.no_grad():
        table.weight[PAD_ID] = 0
    A = torch.randn(20, 4)
    a = dec.greedy(A, 10, table)
    assert torch.equal(a, dec.greedy(A, 10, table))
    assert (a != PAD_ID).all()
    assert all(len(set(row.tolist())) == 10 for row in a)
    rep = dec.greedy(A, 10, table, no_repeat=False)
    assert (rep != PAD_ID).all()


def test_greedy_consistent_with_teacher(table):
    dec = ActionDecoder(4)
    A = torch.randn(4, 4)
    items = dec.greedy(A, 3, table, no_repeat=False)
    logits = dec.teacher(A, items, table)
    logits[..., PAD_ID] = float("-inf")
    assert torch.equal(logits.argmax(-1), items)
