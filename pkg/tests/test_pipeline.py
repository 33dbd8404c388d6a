import math

import numpy as np
import pytest

from dialact.checkpoint import checkpoint_hash
from dialact.config import make_config
from dialact.corpus import (
    Conversation,
    DatasetSplit,
    Utterance,
    load_taxonomy,
    tokenize,
)
from dialact.errors import ConfigError, DataError, NumericError
from dialact.model import build_model
from dialact.synth import load_bundled_spec, synth_generate
from dialact.train import (
    REFERENCE_RESULTS,
    evaluate,
    multi_seed_eval,
    train,
    validation_callback_for,
)
from dialact.vocab import TokenVocab


SMALL = dict(d_emb=8, gru_hidden=8, attn_heads=2, attn_hidden=4, combiner_hidden=8,
             label_emb_width=4, bilm_layers=1, d_hid=8, d_mix=8)


def make_corpora(train_n=120, val_n=40, spec_name="separable", seed=50):
    spec = load_bundled_spec(spec_name)
    tr, _ = synth_generate(spec, seed=seed, num_utterances=train_n, id_prefix="tr")
    va, _ = synth_generate(spec, seed=seed + 1, num_utterances=val_n, id_prefix="va")
    return tr, va


def test_zero_epoch_returns_initialized_model_with_untrained_accuracy():
    tr, va = make_corpora(60, 30)
    cfg = make_config("desk", epochs=0, **SMALL)
    result = train(cfg, tr, validation_callback_for(va), seed=1)
    assert len(result.history) == 1
    assert result.history[0].epoch == 0
    assert math.isnan(result.history[0].mean_train_loss)
    assert 0.0 <= result.best_validation_accuracy <= 1.0


def test_training_is_deterministic_per_seed():
    tr, va = make_corpora(80, 30)
    cfg = make_config("desk", epochs=2, **SMALL)
    h1 = checkpoint_hash(train(cfg, tr, validation_callback_for(va), seed=9).model)
    h2 = checkpoint_hash(train(cfg, tr, validation_callback_for(va), seed=9).model)
    h3 = checkpoint_hash(train(cfg, tr, validation_callback_for(va), seed=10).model)
    assert h1 == h2
    assert h1 != h3


def test_training_improves_loss():
    tr, va = make_corpora(100, 30)
    cfg = make_config("desk", epochs=4, **SMALL)
    result = train(cfg, tr, validation_callback_for(va), seed=2)
    losses = [r.mean_train_loss for r in result.history[1:]]
    assert losses[-1] < losses[0]


def test_overfit_oracle_on_small_corpus():
    # memorization run: evaluating on the training data itself
    spec = load_bundled_spec("separable")
    tr, _ = synth_generate(spec, seed=77, num_utterances=50, id_prefix="mem")
    cfg = make_config("desk", epochs=25, **SMALL)
    result = train(cfg, tr, validation_callback_for(tr), seed=3)
    assert evaluate(result.model, tr).accuracy >= 0.99


def test_training_rejects_unlabeled_data():
    conv = Conversation("c", [Utterance("Yes.", tokenize("Yes."), "A", None, 0)])
    cfg = make_config("desk", epochs=1, **SMALL)
    with pytest.raises(DataError):
        train(cfg, [conv], lambda m: 0.0, seed=0)


def test_training_aborts_on_non_finite_loss():
    tr, va = make_corpora(40, 20)
    cfg = make_config("desk", epochs=1, **SMALL, lr=1e30, weight_decay=0.0)
    cb = validation_callback_for(va)

    def poisoned(model):
        # corrupt a parameter after init so the next epoch blows up
        model.params["head.W"].value[...] = 1e308
        return cb(model)

    with pytest.raises(NumericError):
        train(cfg, tr, poisoned, seed=4)


def test_degenerate_head_accuracy_equals_label_zero_frequency(tmp_path):
    tax_file = tmp_path / "tiny.tsv"
    tax_file.write_text("q\tQuestion\twhat?\t1\ns\tStatement\tok.\t1\ny\tYes\tyes.\t1\nn\tNo\tno.\t1\n")
    taxonomy = load_taxonomy(tax_file)
    rows = [("A", "what is it ?", "q"), ("B", "it is fine .", "s"),
            ("A", "yes .", "y"), ("B", "no .", "n"), ("A", "what now ?", "q")]
    utts = [Utterance(t, tokenize(t), s, tag, i) for i, (s, t, tag) in enumerate(rows)]
    for u in utts:
        u.label_id = taxonomy.id_of(u.act_tag)
    convs = [Conversation("c", utts)]

    cfg = make_config("desk", taxonomy=str(tax_file), fallback_threshold=0.0, **SMALL)
    vocab = TokenVocab.from_conversations(convs)
    model = build_model(cfg, vocab, taxonomy, seed=5)
    model.params["head.W"].value[...] = 0.0
    model.params["head.b"].value[...] = 0.0
    result = evaluate(model, convs)
    freq0 = sum(1 for u in utts if u.label_id == 0) / len(utts)
    assert result.accuracy == pytest.approx(freq0)


def test_multi_seed_eval_aggregation_exact():
    tr, va = make_corpora(60, 24)
    spec = load_bundled_spec("separable")
    te, _ = synth_generate(spec, seed=60, num_utterances=24, id_prefix="te")
    split = DatasetSplit(train=tr, validation=va, test=te)
    cfg = make_config("desk", epochs=1, **SMALL)
    report = multi_seed_eval(cfg, split, seeds=(0, 1, 2))
    assert len(report.rows) == 3
    accs = [r.test_accuracy for r in report.rows]
    assert report.mean_test_accuracy == sum(accs) / len(accs)
    assert report.std_test_accuracy is not None
    assert report.reference == REFERENCE_RESULTS
    assert report.reference["status"] == "NOT-REPRODUCED"


def test_multi_seed_eval_identical_seeds_zero_std():
    tr, va = make_corpora(50, 20)
    spec = load_bundled_spec("separable")
    te, _ = synth_generate(spec, seed=61, num_utterances=20, id_prefix="te")
    split = DatasetSplit(train=tr, validation=va, test=te)
    cfg = make_config("desk", epochs=1, **SMALL)
    report = multi_seed_eval(cfg, split, seeds=(4, 4, 4))
    assert report.std_test_accuracy == 0.0
    assert len({r.test_accuracy for r in report.rows}) == 1


def test_multi_seed_eval_single_seed_std_none():
    tr, va = make_corpora(50, 20)
    spec = load_bundled_spec("separable")
    te, _ = synth_generate(spec, seed=62, num_utterances=20, id_prefix="te")
    split = DatasetSplit(train=tr, validation=va, test=te)
    cfg = make_config("desk", epochs=0, **SMALL)
    report = multi_seed_eval(cfg, split, seeds=(0,))
    assert report.std_test_accuracy is None
    with pytest.raises(DataError):
        multi_seed_eval(cfg, split, seeds=())


def test_evaluate_empty_rejected():
    cfg = make_config("desk", **SMALL)
    vocab = TokenVocab.from_tokens(["x"])
    from dialact.corpus import load_bundled_taxonomy

    model = build_model(cfg, vocab, load_bundled_taxonomy("swda"), seed=0)
    with pytest.raises(DataError):
        evaluate(model, [])


def test_encoder_variants_train_and_predict():
    tr, va = make_corpora(40, 16)
    for encoder in ("bilm", "both-concat"):
        cfg = make_config("desk", epochs=1, encoder=encoder, **SMALL)
        result = train(cfg, tr, validation_callback_for(va), seed=6)
        ev = evaluate(result.model, va)
        assert 0.0 <= ev.accuracy <= 1.0


def test_pca_reduction_path_trains():
    tr, va = make_corpora(40, 16)
    cfg = make_config("desk", epochs=1, encoder="bilm", pca_dim=4, **SMALL)
    result = train(cfg, tr, validation_callback_for(va), seed=7)
    assert "pca.components" in result.model.buffers
    assert result.model.buffers["pca.components"].shape[0] == 4
    ev = evaluate(result.model, va)
    assert 0.0 <= ev.accuracy <= 1.0


def test_paper_presets_pin_table_values():
    fin = make_config("paper-finetune")
    assert fin.lr == 1e-5
    assert fin.weight_decay == 0.1
    assert fin.epochs == 7
    assert fin.batch_conversations == 8000
    pre = make_config("paper-pretrain")
    assert pre.bilm_layers == 24
    assert pre.d_hid == 1024
    assert pre.attn_heads == 16
    assert pre.attn_hidden == 64
    assert pre.dropout == 0.1


def test_config_validation():
    with pytest.raises(ConfigError):
        make_config("desk", encoder="transformer")
    with pytest.raises(ConfigError):
        make_config("nonsense")
    with pytest.raises(ConfigError):
        make_config("desk", dropout=1.5)
    with pytest.raises(ConfigError):
        make_config("desk", label_mode="predicted")
    with pytest.raises(ConfigError):
        make_config("desk", not_a_field=3)
