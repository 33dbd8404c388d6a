import numpy as np
import pytest

from dialact.combiner import CombinationRnn, ConversationRun, combine_step, run_conversation
from dialact.errors import ConfigError, DataError, ShapeError
from dialact.params import ParamStore
from dialact.rng import SeededRng
from dialact.tensor import Tensor, no_grad


REP_W = 4
NUM_LABELS = 3


def build_rnn(seed=0, hidden=3, label_width=2):
    store = ParamStore()
    rnn = CombinationRnn.build(store, "comb", REP_W, NUM_LABELS, label_width, hidden, SeededRng(seed))
    return store, rnn


def toy_encoder(seed=1):
    """Representation = fixed random projection of (mean token id, g_prev)."""
    rng = SeededRng(seed)
    W = rng.uniform_matrix(2, REP_W, -1, 1)

    def encode(ids, g_prev):
        feats = np.array([[sum(ids) / len(ids), float(g_prev.value.sum())]])
        return Tensor(feats @ W)

    return encode


def test_first_step_uses_reserved_row_and_zero_state():
    store, rnn = build_rnn()
    g0 = rnn.initial_state()
    np.testing.assert_array_equal(g0.value, np.zeros((1, 3)))
    rep = Tensor(np.ones((1, REP_W)))
    g1, f1 = combine_step(rnn, g0, rep, None)
    # reserved row is the last label-embedding row
    assert rnn.label_row(None) == NUM_LABELS
    assert f1.shape == (1, 3 + REP_W)
    np.testing.assert_array_equal(f1.value[:, :3], g1.value)
    np.testing.assert_array_equal(f1.value[:, 3:], rep.value)


def test_zero_parameters_halve_previous_state():
    store, rnn = build_rnn(seed=2)
    for name in store.names():
        store[name].value[...] = 0.0
    g_prev = Tensor([[0.6, -0.2, 0.4]])
    g_new, _ = combine_step(rnn, g_prev, Tensor(np.zeros((1, REP_W))), 1)
    np.testing.assert_allclose(g_new.value, 0.5 * g_prev.value, atol=1e-12)


def test_label_id_out_of_range():
    _, rnn = build_rnn()
    with pytest.raises(IndexError):
        combine_step(rnn, rnn.initial_state(), Tensor(np.zeros((1, REP_W))), NUM_LABELS)


def test_rep_shape_checked():
    _, rnn = build_rnn()
    with pytest.raises(ShapeError):
        combine_step(rnn, rnn.initial_state(), Tensor(np.zeros((1, REP_W + 1))), None)


def test_single_utterance_conversation_gets_zero_context():
    _, rnn = build_rnn(seed=3)
    seen = []

    def encode(ids, g_prev):
        seen.append(g_prev.value.copy())
        return Tensor(np.zeros((1, REP_W)))

    run = run_conversation(rnn, encode, [[1, 2]], "none")
    assert len(run.finals) == 1
    np.testing.assert_array_equal(seen[0], np.zeros((3, 1)))


def test_gold_mode_requires_labels_and_predicted_requires_classifier():
    _, rnn = build_rnn()
    enc = toy_encoder()
    with pytest.raises(ConfigError):
        run_conversation(rnn, enc, [[1]], "gold")
    with pytest.raises(ConfigError):
        run_conversation(rnn, enc, [[1]], "predicted")
    with pytest.raises(ConfigError):
        run_conversation(rnn, enc, [[1]], "bogus", gold_labels=[0])
    with pytest.raises(DataError):
        run_conversation(rnn, enc, [], "none")


def test_gold_labels_change_outputs_vs_none():
    _, rnn = build_rnn(seed=4)
    enc = toy_encoder(seed=5)
    seqs = [[1, 2], [3], [2, 2]]
    gold = run_conversation(rnn, enc, seqs, "gold", gold_labels=[0, 1, 2])
    none = run_conversation(rnn, enc, seqs, "none")
    # first utterance identical (no previous label yet), later ones differ
    np.testing.assert_array_equal(gold.finals[0].value, none.finals[0].value)
    assert np.abs(gold.finals[1].value - none.finals[1].value).max() > 1e-9


def test_prefix_invariance_exact():
    _, rnn = build_rnn(seed=6)
    enc = toy_encoder(seed=7)
    seqs = [[1], [2, 3], [4], [5, 1]]
    labels = [0, 1, 2, 0]
    full = run_conversation(rnn, enc, seqs, "gold", gold_labels=labels)
    truncated = run_conversation(rnn, enc, seqs[:2], "gold", gold_labels=labels[:2])
    for i in range(2):
        np.testing.assert_array_equal(full.finals[i].value, truncated.finals[i].value)


def test_conversation_isolation_bit_exact():
    _, rnn = build_rnn(seed=8)
    enc = toy_encoder(seed=9)
    conv_a = ([[1, 2], [3]], [0, 1])
    conv_b = ([[4], [5, 5], [1]], [2, 0, 1])

    def outputs(order):
        outs = {}
        for name, (seqs, labels) in order:
            run = run_conversation(rnn, enc, seqs, "gold", gold_labels=labels)
            outs[name] = [f.value.copy() for f in run.finals]
        return outs

    first = outputs([("a", conv_a), ("b", conv_b)])
    second = outputs([("b", conv_b), ("a", conv_a)])
    for name in ("a", "b"):
        for x, y in zip(first[name], second[name]):
            np.testing.assert_array_equal(x, y)


def test_predicted_mode_records_labels():
    _, rnn = build_rnn(seed=10)
    enc = toy_encoder(seed=11)
    labels_seen = []

    def classify(final):
        label = int(final.value.sum() > 0)
        labels_seen.append(label)
        return label

    run = run_conversation(rnn, enc, [[1], [2], [3]], "predicted", classify_fn=classify)
    assert run.predicted_labels == labels_seen
    assert len(run.predicted_labels) == 3


def test_gradients_flow_through_feedback_loop():
    from dialact.checks import check_combiner

    report = check_combiner(0)
    assert report.max_rel_err < 1e-4
    # the attention context matrix only gets gradient through the g feedback
    assert "attn.W_s3" in report.entries


def test_long_conversation_state_stays_finite():
    _, rnn = build_rnn(seed=12)
    enc = toy_encoder(seed=13)
    seqs = [[i % 5 + 1] for i in range(512)]
    with no_grad():
        run = run_conversation(rnn, enc, seqs, "none")
    assert np.isfinite(run.states[-1].value).all()
    assert len(run.finals) == 512
