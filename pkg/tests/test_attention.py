import math

import numpy as np
import pytest

from dialact.attention import (
    BiGru,
    ContextualAttention,
    GruCell,
    attend,
    attention_scores,
    bigru_encode,
    encode_sentence,
)
from dialact.errors import DataError, ShapeError
from dialact.gradcheck import grad_check
from dialact.params import ParamStore
from dialact.rng import SeededRng
from dialact.tensor import Tensor, cross_entropy, no_grad


def build_encoder(seed=0, d_emb=4, u=3, heads=2, d_a=2, g=3, vocab=6):
    store = ParamStore()
    rng = SeededRng(seed)
    from dialact.bilm import init_matrix

    embedding = init_matrix(store, "embed", vocab, d_emb, rng, fan_in=d_emb)
    gru = BiGru.build(store, "gru", d_emb, u, rng)
    att = ContextualAttention.build(store, "attn", 2 * u, g, heads, d_a, rng)
    return store, embedding, gru, att


# GRU ------------------------------------------------------------------------


def test_gru_zero_parameters_halves_state():
    store = ParamStore()
    cell = GruCell.build(store, "gru", 2, 3, SeededRng(0))
    for name in store.names():
        store[name].value[...] = 0.0
    h = Tensor([[0.8, -0.4, 0.2]])
    out = cell.step(Tensor([[1.0, 2.0]]), h)
    np.testing.assert_allclose(out.value, 0.5 * h.value, atol=1e-12)


def test_bigru_zero_parameters_zero_states():
    store, embedding, gru, _ = build_encoder(seed=1)
    for name in store.names():
        if name.startswith("gru."):
            store[name].value[...] = 0.0
    rng = SeededRng(5)
    H = bigru_encode(gru, Tensor(rng.uniform_matrix(4, 4, -1, 1)))
    np.testing.assert_array_equal(H.value, np.zeros((4, 6)))


def test_bigru_single_token():
    _, _, gru, _ = build_encoder(seed=2)
    H = bigru_encode(gru, Tensor(SeededRng(3).uniform_matrix(1, 4, -1, 1)))
    assert H.shape == (1, 6)


def test_bigru_empty_input_rejected():
    _, _, gru, _ = build_encoder(seed=2)
    with pytest.raises(DataError):
        bigru_encode(gru, Tensor(np.zeros((0, 4))))


def test_gru_state_stays_in_unit_interval():
    # convex blend of a [-1,1] state and a tanh candidate stays in [-1,1]
    for seed in range(10):
        store = ParamStore()
        cell = GruCell.build(store, "gru", 3, 4, SeededRng(seed))
        for name in store.names():
            store[name].value *= 3.0  # exaggerate dynamics
        rng = SeededRng(seed + 50)
        h = Tensor(rng.uniform_matrix(1, 4, -1, 1))
        for _ in range(20):
            h = cell.step(Tensor(rng.uniform_matrix(1, 3, -2, 2)), h)
            assert np.abs(h.value).max() <= 1.0 + 1e-12


def test_gru_run_matches_stepwise():
    store = ParamStore()
    cell = GruCell.build(store, "gru", 3, 4, SeededRng(7))
    X = Tensor(SeededRng(8).uniform_matrix(5, 3, -1, 1))
    bulk_states = cell.run(X)
    h = cell.initial_state()
    for t in range(5):
        from dialact.tensor import row

        h = cell.step(row(X, t), h)
        np.testing.assert_allclose(bulk_states[t].value, h.value, atol=1e-12)


# attention scores -------------------------------------------------------------


def test_zero_score_weights_give_uniform_attention():
    _, _, _, att = build_encoder(seed=3)
    att.W_s2.value[...] = 0.0
    H = Tensor(SeededRng(9).uniform_matrix(5, 6, -1, 1))
    S = attention_scores(att, H, att.zero_context())
    rep = attend(S, H)
    np.testing.assert_allclose(rep.attention.value, np.full((2, 5), 0.2), atol=1e-12)


def test_zero_context_equals_zero_context_matrix():
    _, _, _, att = build_encoder(seed=4)
    H = Tensor(SeededRng(10).uniform_matrix(4, 6, -1, 1))
    s_with = attention_scores(att, H, att.zero_context()).value
    att.W_s3.value[...] = 0.0
    g = Tensor(SeededRng(11).uniform_matrix(3, 1, -1, 1))
    s_without = attention_scores(att, H, g).value
    np.testing.assert_array_equal(s_with, s_without)


def test_scores_match_hand_evaluation_tiny_instance():
    # all shapes <= 2: one head, two tokens, d_a = 2, context width 1
    store = ParamStore()
    att = ContextualAttention(
        W_s1=store.add("W_s1", [[0.5, -0.25], [0.125, 0.75]]),
        W_s2=store.add("W_s2", [[1.5, -0.5]]),
        W_s3=store.add("W_s3", [[0.25], [-0.125]]),
        b=store.add("b", [[0.0625], [-0.5]]),
        heads=1, d_a=2, encoder_width=2, context_width=1,
    )
    H = Tensor([[0.5, 0.25], [-0.75, 1.0]])
    g = Tensor([[0.5]])
    S = attention_scores(att, H, g).value

    expected = np.zeros((1, 2))
    for t in range(2):
        hidden = []
        for a in range(2):
            pre = (att.W_s1.value[a, 0] * H.value[t, 0]
                   + att.W_s1.value[a, 1] * H.value[t, 1]
                   + att.W_s3.value[a, 0] * 0.5
                   + att.b.value[a, 0])
            hidden.append(math.tanh(pre))
        expected[0, t] = att.W_s2.value[0, 0] * hidden[0] + att.W_s2.value[0, 1] * hidden[1]
    np.testing.assert_allclose(S, expected, atol=1e-12)


def test_context_and_bias_are_column_constant():
    _, _, _, att = build_encoder(seed=6)
    att.W_s2.value[...] = np.eye(att.heads, att.d_a)
    H = Tensor(np.zeros((4, 6)))
    g = Tensor(SeededRng(12).uniform_matrix(3, 1, -1, 1))
    S = attention_scores(att, H, g).value
    for t in range(1, 4):
        np.testing.assert_allclose(S[:, t], S[:, 0], atol=1e-14)


def test_attention_shape_errors_name_operand():
    _, _, _, att = build_encoder(seed=6)
    with pytest.raises(ShapeError, match="H"):
        attention_scores(att, Tensor(np.zeros((3, 5))), att.zero_context())
    with pytest.raises(ShapeError, match="g_prev"):
        attention_scores(att, Tensor(np.zeros((3, 6))), Tensor(np.zeros((2, 1))))


# attend -------------------------------------------------------------------------


def test_attend_single_token_copies_state():
    H = Tensor([[1.0, -2.0, 0.5]])
    S = Tensor([[0.3], [-5.0]])
    rep = attend(S, H)
    assert rep.M.shape == (2, 3)
    for r in range(2):
        np.testing.assert_allclose(rep.M.value[r], H.value[0], atol=1e-12)


def test_attend_uniform_scores_average_states():
    rng = SeededRng(13)
    H = Tensor(rng.uniform_matrix(5, 3, -1, 1))
    S = Tensor(np.zeros((2, 5)))
    rep = attend(S, H)
    mean = H.value.mean(axis=0)
    for r in range(2):
        np.testing.assert_allclose(rep.M.value[r], mean, atol=1e-12)


def test_attend_permutation_invariance():
    rng = SeededRng(14)
    H = rng.uniform_matrix(6, 4, -1, 1)
    S = rng.uniform_matrix(3, 6, -2, 2)
    perm = [4, 0, 5, 2, 1, 3]
    base = attend(Tensor(S), Tensor(H)).M.value
    permuted = attend(Tensor(S[:, perm]), Tensor(H[perm])).M.value
    np.testing.assert_allclose(permuted, base, atol=1e-12)


def test_attend_rows_in_convex_hull_of_states():
    for seed in range(5):
        rng = SeededRng(seed + 30)
        H = rng.uniform_matrix(7, 4, -1, 1)
        S = rng.uniform_matrix(3, 7, -3, 3)
        rep = attend(Tensor(S), Tensor(H))
        np.testing.assert_allclose(rep.attention.value.sum(axis=1), np.ones(3), atol=1e-12)
        lo, hi = H.min(axis=0), H.max(axis=0)
        assert (rep.M.value >= lo - 1e-10).all()
        assert (rep.M.value <= hi + 1e-10).all()


def test_attend_shape_mismatch():
    with pytest.raises(ShapeError):
        attend(Tensor(np.zeros((2, 4))), Tensor(np.zeros((3, 5))))


# encode_sentence ------------------------------------------------------------------


def test_encode_sentence_deterministic_and_fixed_size():
    _, embedding, gru, att = build_encoder(seed=15)
    g0 = att.zero_context()
    for ids in ([1], [1, 2, 3], [5, 4, 3, 2, 1, 2, 3]):
        a = encode_sentence(embedding, gru, att, ids, g0)
        b = encode_sentence(embedding, gru, att, ids, g0)
        assert a.R.shape == (1, att.heads * 2 * gru.hidden)
        np.testing.assert_array_equal(a.R.value, b.R.value)


def test_encode_sentence_context_sensitivity():
    changed = 0
    for seed in range(5):
        _, embedding, gru, att = build_encoder(seed=seed + 40)
        ids = [1, 2, 3, 4]
        base = encode_sentence(embedding, gru, att, ids, att.zero_context()).R.value
        g = Tensor(SeededRng(seed).uniform_matrix(3, 1, -1, 1))
        moved = encode_sentence(embedding, gru, att, ids, g).R.value
        if np.abs(base - moved).max() > 1e-9:
            changed += 1
    assert changed == 5  # nonzero W_s3, unsaturated tanh


def test_encode_sentence_empty_rejected():
    _, embedding, gru, att = build_encoder(seed=16)
    with pytest.raises(DataError):
        encode_sentence(embedding, gru, att, [], att.zero_context())


def test_full_encoder_gradients_pass_finite_difference_check():
    store, embedding, gru, att = build_encoder(seed=17)
    ids = [1, 4, 2]
    g = Tensor(SeededRng(18).uniform_matrix(3, 1, -0.5, 0.5))

    def loss():
        rep = encode_sentence(embedding, gru, att, ids, g)
        return cross_entropy(rep.R, [2])

    report = grad_check(loss, store)
    assert report.max_rel_err < 1e-4


def test_fused_gru_matches_stepwise_reference():
    for seed in range(5):
        store = ParamStore()
        cell = GruCell.build(store, "gru", 3, 4, SeededRng(seed))
        X = Tensor(SeededRng(seed + 60).uniform_matrix(6, 3, -1, 1))
        h0 = Tensor(SeededRng(seed + 70).uniform_matrix(1, 4, -0.5, 0.5))
        for reverse in (False, True):
            stepwise = cell.run(X, reverse=reverse, initial=h0)
            fused = cell.run_fused(X, reverse=reverse, initial=h0)
            for t in range(6):
                np.testing.assert_allclose(fused.value[t], stepwise[t].value[0], atol=1e-12)


def test_fused_gru_initial_state_gradient_flows():
    from dialact.tensor import mean_all, mul as tmul

    store = ParamStore()
    cell = GruCell.build(store, "gru", 2, 3, SeededRng(1))
    h0 = Tensor(SeededRng(2).uniform_matrix(1, 3, -0.5, 0.5), requires_grad=True)
    X = Tensor(SeededRng(3).uniform_matrix(4, 2, -1, 1))
    out = cell.run_fused(X, initial=h0)
    mean_all(tmul(out, out)).backward()
    assert np.abs(h0.grad).max() > 0
