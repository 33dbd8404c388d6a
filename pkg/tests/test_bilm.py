import numpy as np
import pytest

from dialact.bilm import (
    BiLm,
    LayerMixer,
    LayerProjector,
    LayerStack,
    bilm_forward,
    bilm_loss,
    mix_layers,
)
from dialact.errors import DataError, ShapeError
from dialact.gradcheck import grad_check
from dialact.optim import AdamW
from dialact.params import ParamStore
from dialact.rng import SeededRng
from dialact.tensor import Tensor, no_grad


def build_bilm(seed=0, vocab=6, d_emb=4, d_hid=3, layers=2):
    store = ParamStore()
    bilm = BiLm.build(store, "bilm", vocab, d_emb, d_hid, layers, SeededRng(seed))
    return store, bilm


def zero_lstm_params(bilm):
    for layer in bilm.fwd + bilm.bwd:
        layer.W.value[...] = 0.0
        layer.U.value[...] = 0.0
        layer.b.value[...] = 0.0


def tie_directions(bilm):
    for f, b in zip(bilm.fwd, bilm.bwd):
        b.W.value[...] = f.W.value
        b.U.value[...] = f.U.value
        b.b.value[...] = f.b.value


# forward --------------------------------------------------------------------


def test_forward_stack_shapes_single_token():
    _, bilm = build_bilm()
    stack = bilm_forward(bilm, [2])
    assert stack.num_layers == 3  # embedding + 2 LSTM layers
    assert stack.num_positions == 1
    assert stack.widths() == [4, 6, 6]


def test_forward_empty_sequence_rejected():
    _, bilm = build_bilm()
    with pytest.raises(DataError):
        bilm_forward(bilm, [])


def test_forward_zero_lstm_parameters_zero_states():
    _, bilm = build_bilm(seed=3)
    zero_lstm_params(bilm)
    stack = bilm_forward(bilm, [1, 2, 3, 4])
    for layer in stack.layers[1:]:
        np.testing.assert_array_equal(layer.value, np.zeros_like(layer.value))


def test_forward_mirror_symmetry_with_tied_directions():
    _, bilm = build_bilm(seed=7)
    tie_directions(bilm)
    ids = [1, 4, 2, 5, 3]
    fwd_stack = bilm_forward(bilm, ids)
    rev_stack = bilm_forward(bilm, ids[::-1])
    h = bilm.d_hid
    # embeddings simply reverse
    np.testing.assert_allclose(rev_stack.layers[0].value, fwd_stack.layers[0].value[::-1], atol=1e-12)
    for j in range(1, fwd_stack.num_layers):
        orig = fwd_stack.layers[j].value
        rev = rev_stack.layers[j].value
        swapped = np.concatenate([orig[:, h:], orig[:, :h]], axis=1)
        np.testing.assert_allclose(rev, swapped[::-1], atol=1e-12)


def test_forward_purity():
    _, bilm = build_bilm(seed=9)
    a = bilm_forward(bilm, [1, 2, 3])
    b = bilm_forward(bilm, [1, 2, 3])
    for la, lb in zip(a.layers, b.layers):
        np.testing.assert_array_equal(la.value, lb.value)


# language-model loss -----------------------------------------------------------


def test_loss_zero_with_single_token_vocab():
    store = ParamStore()
    bilm = BiLm.build(store, "bilm", 1, 3, 3, 1, SeededRng(0))
    assert bilm_loss(bilm, [0, 0, 0, 0]).item() == pytest.approx(0.0, abs=1e-12)


def test_loss_requires_two_tokens():
    _, bilm = build_bilm()
    with pytest.raises(DataError):
        bilm_loss(bilm, [1])


def test_untrained_loss_near_uniform_prediction():
    vocab = 50
    expected = 2 * np.log(vocab)
    for seed in range(3):
        store = ParamStore()
        bilm = BiLm.build(store, "bilm", vocab, 16, 16, 2, SeededRng(seed))
        rng = SeededRng(seed + 100)
        ids = [rng.below(vocab) for _ in range(12)]
        loss = bilm_loss(bilm, ids).item()
        assert abs(loss - expected) / expected < 0.15


def test_memorizes_repeated_sequence():
    store = ParamStore()
    bilm = BiLm.build(store, "bilm", 6, 16, 16, 1, SeededRng(1))
    ids = [4, 5] * 4
    opt = AdamW(store, lr=0.02)
    for _ in range(200):
        store.zero_grad()
        loss = bilm_loss(bilm, ids)
        loss.backward()
        opt.step()
    final = bilm_loss(bilm, ids).item()
    assert final < 0.2 * (2 * np.log(6))


def test_bilm_gradients_pass_finite_difference_check():
    from dialact.checks import check_bilm

    assert check_bilm(5).max_rel_err < 1e-4


# layer mixing -------------------------------------------------------------------


def _stack_from_arrays(*arrays):
    return LayerStack([Tensor(a) for a in arrays])


def test_mix_one_hot_dominant_selects_top_layer():
    store = ParamStore()
    mixer = LayerMixer.build(store, "mixer", 3)
    mixer.raw_weights.value[...] = [[0.0], [0.0], [1e6]]
    rng = SeededRng(2)
    layers = [rng.uniform_matrix(4, 5, -1, 1) for _ in range(3)]
    out = mix_layers(_stack_from_arrays(*layers), mixer)
    np.testing.assert_allclose(out.value, layers[2], atol=1e-9)


def test_mix_weights_sum_to_one():
    store = ParamStore()
    mixer = LayerMixer.build(store, "mixer", 4)
    mixer.raw_weights.value[...] = [[0.3], [-2.0], [1.1], [0.0]]
    w = mixer.weights().value
    assert w.sum() == pytest.approx(1.0, abs=1e-12)


def test_mix_gamma_zero_annihilates():
    store = ParamStore()
    mixer = LayerMixer.build(store, "mixer", 2)
    mixer.gamma.value[...] = 0.0
    out = mix_layers(_stack_from_arrays(np.ones((3, 2)), np.ones((3, 2))), mixer)
    np.testing.assert_array_equal(out.value, np.zeros((3, 2)))


def test_mix_hand_case_two_layers():
    store = ParamStore()
    mixer = LayerMixer.build(store, "mixer", 2)
    mixer.gamma.value[...] = 2.0
    out = mix_layers(_stack_from_arrays([[1.0, 0.0]], [[0.0, 1.0]]), mixer)
    np.testing.assert_allclose(out.value, [[1.0, 1.0]], atol=1e-12)


def test_mix_homogeneous_in_stack_scale():
    store = ParamStore()
    mixer = LayerMixer.build(store, "mixer", 3)
    mixer.raw_weights.value[...] = [[0.5], [-0.4], [0.1]]
    mixer.gamma.value[...] = 1.7
    rng = SeededRng(8)
    layers = [rng.uniform_matrix(3, 4, -1, 1) for _ in range(3)]
    base = mix_layers(_stack_from_arrays(*layers), mixer).value
    scaled = mix_layers(_stack_from_arrays(*(2.5 * a for a in layers)), mixer).value
    np.testing.assert_allclose(scaled, 2.5 * base, atol=1e-10)


def test_mix_convex_combination_of_equal_layers():
    store = ParamStore()
    mixer = LayerMixer.build(store, "mixer", 3)
    mixer.raw_weights.value[...] = [[1.0], [2.0], [-1.0]]
    v = np.array([[0.2, -0.7, 1.5]])
    out = mix_layers(_stack_from_arrays(v, v, v), mixer)
    np.testing.assert_allclose(out.value, v, atol=1e-10)


def test_mix_layer_count_mismatch():
    store = ParamStore()
    mixer = LayerMixer.build(store, "mixer", 2)
    with pytest.raises(ShapeError):
        mix_layers(_stack_from_arrays(np.ones((2, 2))), mixer)


def test_mix_requires_common_width():
    store = ParamStore()
    mixer = LayerMixer.build(store, "mixer", 2)
    with pytest.raises(ShapeError):
        mix_layers(_stack_from_arrays(np.ones((2, 2)), np.ones((2, 3))), mixer)


def test_projector_maps_to_common_width_and_gradchecks():
    store, bilm = build_bilm(seed=11, vocab=5, d_emb=3, d_hid=2, layers=2)
    stack = bilm_forward(bilm, [1, 2, 4])
    proj_store = ParamStore()
    projector = LayerProjector.build(proj_store, "proj", stack.widths(), 3, SeededRng(4))
    mixer = LayerMixer.build(proj_store, "mixer", stack.num_layers)
    mixed = mix_layers(projector.project(stack), mixer)
    assert mixed.shape == (3, 3)

    def loss():
        with no_grad():
            frozen = bilm_forward(bilm, [1, 2, 4])
        frozen = LayerStack([Tensor(l.value) for l in frozen.layers])
        out = mix_layers(projector.project(frozen), mixer)
        from dialact.tensor import mean_all, mul
        return mean_all(mul(out, out))

    report = grad_check(loss, proj_store)
    assert report.max_rel_err < 1e-4


def test_fused_lstm_matches_stepwise_reference():
    from dialact.bilm import LstmLayer
    from dialact.rng import SeededRng as Rng

    for seed in range(5):
        store = ParamStore()
        layer = LstmLayer.build(store, "lstm", 3, 4, SeededRng(seed))
        X = Tensor(Rng(seed + 80).uniform_matrix(6, 3, -1, 1))
        for reverse in (False, True):
            stepwise = layer.run(X, reverse=reverse)
            fused = layer.run_fused(X, reverse=reverse)
            for t in range(6):
                np.testing.assert_allclose(fused.value[t], stepwise[t].value[0], atol=1e-12)
