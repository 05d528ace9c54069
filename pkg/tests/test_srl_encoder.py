from types import SimpleNamespace

import numpy as np
import pytest

from srltools import tensor_core as tc
from srltools.common import ConfigError, NonFiniteLogits, OddWidth, ShapeMismatch, VocabMismatch
from srltools.conll_corpus import parse_sentence
from srltools.srl_encoder import (LayerParams, ModelConfig, SrlModel, build_input, build_token_vocab,
                                  build_vocabs, encoder_block, ffn, forward, init_params, lisa_head, load_checkpoint,
                                  multi_head, predict_roles, relaware_attention, save_checkpoint,
                                  scaled_dot_attention, sinusoidal_positions, vocab_sizes)
from srltools.syntax_features import one_hot_head_matrix, select_tree

from conftest import row, tiny_config


def make_model(config, sentence, seed=0):
    tree = select_tree(sentence, "gold")
    vocabs = build_vocabs([sentence], [tree], config)
    return SrlModel.create(config, vocabs, np.random.default_rng(seed)), tree


def zeroed(tensor):
    tensor.data[...] = 0.0


def test_positions_formula():
    pe = sinusoidal_positions(7, 4)
    np.testing.assert_array_equal(pe[0], [0.0, 1.0, 0.0, 1.0])
    assert pe[1, 0] == pytest.approx(np.sin(1.0), abs=1e-12)
    assert pe[3, 2] == pytest.approx(np.sin(3 / 10000 ** 0.5), abs=1e-12)
    assert pe[3, 3] == pytest.approx(np.cos(3 / 10000 ** 0.5), abs=1e-12)
    assert np.all(np.abs(pe) <= 1.0)
    with pytest.raises(OddWidth):
        sinusoidal_positions(3, 5)


def test_input_width_and_predicate_embedding(encouragement):
    config = tiny_config("none")
    model, tree = make_model(config, encouragement)
    encoded = build_input(encouragement, 3, tree, config, model.vocabs, model.params)
    assert config.d_f == config.d_w + config.d_t
    assert encoded.embedded.shape == (6, config.d_model)

    raw = encoded.embedded.data - sinusoidal_positions(6, config.d_model)
    pred_part = raw[:, config.d_w + config.d_t:]
    others = [i for i in range(6) if i != 2]
    for i in others:
        np.testing.assert_allclose(pred_part[i], pred_part[others[0]], atol=1e-12)
    assert not np.allclose(pred_part[2], pred_part[others[0]])


def test_input_mode_widens_by_syntax_embeddings(encouragement):
    base = tiny_config("none")
    config = tiny_config("input", ("dep", "rel"))
    assert config.d_model == base.d_model + 2 * config.d_s
    model, tree = make_model(config, encouragement)
    encoded = build_input(encouragement, 3, tree, config, model.vocabs, model.params)
    assert encoded.embedded.shape == (6, config.d_model)
    assert set(encoded.ids) == {"dep", "rel"}
    assert all(len(ids) == 6 for ids in encoded.ids.values())


def test_ffn_constant_with_zero_weights():
    d, hidden = 6, 5
    params = SimpleNamespace(W1=tc.Tensor(np.zeros((d, hidden))), b1=tc.Tensor(np.zeros(hidden)),
                             W2=tc.Tensor(np.zeros((hidden, d))), b2=tc.Tensor(np.full(d, 0.7)))
    x = np.random.default_rng(0).normal(size=(7, d))
    out = ffn(x, params, SimpleNamespace(dropout_ffn=0.2))
    assert out.shape == (7, d)
    np.testing.assert_array_equal(out.data, np.full((7, d), 0.7))
    with pytest.raises(ShapeMismatch):
        ffn(np.ones((7, d + 1)), params, SimpleNamespace(dropout_ffn=0.2))


def test_ffn_gradients():
    rng = np.random.default_rng(1)
    d, hidden = 4, 6
    leaves = [tc.Tensor(rng.normal(size=s), True, n)
              for n, s in (("W1", (d, hidden)), ("b1", (hidden,)), ("W2", (hidden, d)), ("b2", (d,)))]
    x = rng.normal(size=(7, d))

    def f(W1, b1, W2, b2):
        return ffn(x, SimpleNamespace(W1=W1, b1=b1, W2=W2, b2=b2), SimpleNamespace(dropout_ffn=0.2))

    assert tc.grad_check(f, leaves, tol=1e-4).passed


def test_attention_two_token_hand_computation():
    Q, K, V = np.array([[1.0], [2.0]]), np.array([[1.0], [-1.0]]), np.array([[1.0], [3.0]])
    out, weights = scaled_dot_attention(Q, K, V)
    for i, q in enumerate((1.0, 2.0)):
        w = np.exp(q) / (np.exp(q) + np.exp(-q))
        assert weights.data[i, 0] == pytest.approx(w, abs=1e-12)
        assert out.data[i, 0] == pytest.approx(w * 1.0 + (1 - w) * 3.0, abs=1e-12)


def test_attention_zero_values_and_row_sums():
    rng = np.random.default_rng(2)
    Q, K = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
    out, weights = scaled_dot_attention(Q, K, np.zeros((5, 3)))
    np.testing.assert_array_equal(out.data, 0.0)
    np.testing.assert_allclose(weights.data.sum(axis=-1), 1.0, atol=1e-12)
    with pytest.raises(ShapeMismatch):
        scaled_dot_attention(Q, np.ones((5, 2)), Q)


def test_lisa_head_identity_and_gather(encouragement):
    rng = np.random.default_rng(3)
    V, E_R = rng.normal(size=(6, 4)), rng.normal(size=(6, 2))
    joined = np.concatenate([V, E_R], axis=1)

    out, _ = lisa_head(np.eye(6), V, E_R)
    np.testing.assert_array_equal(out.data, joined)

    tree = select_tree(encouragement, "gold")
    out, weights = lisa_head(one_hot_head_matrix(tree), V, E_R)
    np.testing.assert_array_equal(out.data[1], joined[2])
    gather = [h - 1 if h else i for i, h in enumerate(tree.heads)]
    np.testing.assert_array_equal(out.data, joined[gather])
    assert set(np.unique(weights.data)) == {0.0, 1.0}
    with pytest.raises(ShapeMismatch):
        lisa_head(np.eye(5), V, E_R)


def test_relaware_reduces_to_plain_attention():
    rng = np.random.default_rng(4)
    Q, K, V = (rng.normal(size=(5, 4)) for _ in range(3))
    zero = np.zeros((5, 4))
    plain, _ = scaled_dot_attention(Q, K, V)
    aware, _ = relaware_attention(Q, K, V, zero, zero)
    np.testing.assert_array_equal(aware.data, plain.data)
    none, _ = relaware_attention(Q, K, V, None, None)
    np.testing.assert_array_equal(none.data, plain.data)


def test_relaware_two_token_hand_computation():
    Q, K, V = np.array([[0.5], [1.0]]), np.array([[1.0], [-2.0]]), np.array([[2.0], [0.0]])
    E_D, E_R = np.array([[0.1], [-0.3]]), np.array([[0.2], [0.4]])
    out, _ = relaware_attention(Q, K, V, E_D, E_R)
    for i in range(2):
        q = Q[i, 0] + E_D[i, 0] + E_R[i, 0]
        scores = np.array([q * 1.0, q * -2.0])
        w = np.exp(scores) / np.exp(scores).sum()
        values = V[:, 0] + E_D[:, 0] + E_R[:, 0]
        assert out.data[i, 0] == pytest.approx(w @ values, abs=1e-12)


def test_relaware_gradients():
    rng = np.random.default_rng(5)
    leaves = [tc.Tensor(rng.uniform(-2, 2, size=(4, 3)), True, n) for n in ("Q", "K", "V", "E_D", "E_R")]
    report = tc.grad_check(lambda Q, K, V, D, R: relaware_attention(Q, K, V, D, R)[0], leaves, tol=1e-3)
    assert report.passed


def test_single_head_identity_projections():
    config = ModelConfig(d_w=2, d_t=2, d_p=4, head_dim=8, n_blocks=1, d_ff=4).validate()
    assert config.n_heads == 1
    eye, zero = np.eye(8), np.zeros(8)
    head = SimpleNamespace(WQ=tc.Tensor(eye), bQ=tc.Tensor(zero), WK=tc.Tensor(eye),
                           WV=tc.Tensor(eye), bV=tc.Tensor(zero))
    params = SimpleNamespace(heads=[head], WO=tc.Tensor(eye), WO_rel=None, relawe={})
    x = np.random.default_rng(6).normal(size=(5, 8))
    out = multi_head(tc.Tensor(x), params, None, config, 1)
    expected, _ = scaled_dot_attention(x, x, x)
    np.testing.assert_allclose(out.data, expected.data, atol=1e-12)


def test_lisa_off_layer_matches_none(encouragement):
    none_config = tiny_config("none")
    lisa_config = tiny_config("lisa", ("rel",))
    model, tree = make_model(lisa_config, encouragement)
    syntax = build_input(encouragement, 3, tree, lisa_config, model.vocabs, model.params)
    x = tc.Tensor(np.random.default_rng(7).normal(size=(6, lisa_config.d_model)))

    layer = LayerParams.of(model.params, 1, lisa_config)
    a = multi_head(x, layer, syntax, lisa_config, 1)
    b = multi_head(x, layer, syntax, none_config, 1)
    np.testing.assert_array_equal(a.data, b.data)

    replaced = multi_head(x, LayerParams.of(model.params, 2, lisa_config), syntax, lisa_config, 2)
    assert replaced.shape == (6, lisa_config.d_model)


def test_shared_params_do_not_depend_on_mode():
    sizes = {"word": 5, "pos": 3, "role": 4, "dep-word": 6, "rel-label": 4}
    none_params = init_params(tiny_config("none"), sizes, np.random.default_rng(0))
    relawe_params = init_params(tiny_config("relawe", ("dep", "rel")), sizes, np.random.default_rng(0))
    for name, p in none_params.items():
        np.testing.assert_array_equal(relawe_params[name].data, p.data)


@pytest.mark.parametrize("mode, reprs", [("none", ()), ("input", ("dep",)), ("lisa", ("rel",)),
                                         ("relawe", ("dep", "rel"))])
def test_output_width_and_logits_shape(encouragement, mode, reprs):
    config = tiny_config(mode, reprs)
    model, tree = make_model(config, encouragement)
    trace = []
    logits = model.forward(encouragement, 3, tree, trace=trace)
    assert logits.shape == (6, len(model.vocabs["role"]))
    assert len(trace) == config.n_blocks * config.n_heads
    for layer, head, weights in trace:
        assert weights.shape == (6, 6)
        if not (mode == "lisa" and layer == config.lisa_layer and head == config.n_heads - 1):
            np.testing.assert_allclose(weights.sum(axis=-1), 1.0, atol=1e-9)


def test_lisa_replaced_head_is_exact_gather(encouragement):
    config = tiny_config("lisa", ("rel",))
    model, tree = make_model(config, encouragement)
    trace = []
    model.forward(encouragement, 3, tree, trace=trace)
    weights = {(layer, head): w for layer, head, w in trace}
    np.testing.assert_array_equal(weights[(config.lisa_layer, config.n_heads - 1)], one_hot_head_matrix(tree))


def test_relawe_with_zero_syntax_equals_none(encouragement):
    relawe = tiny_config("relawe", ("dep", "rel"), relawe_layers=2)
    model, tree = make_model(relawe, encouragement)
    for r in relawe.embedded_reprs:
        zeroed(model.params[f"syntax.{r}"])
    a = forward(encouragement, 3, tree, relawe, model.params, model.vocabs)
    b = forward(encouragement, 3, tree, tiny_config("none"), model.params, model.vocabs)
    np.testing.assert_allclose(a.data, b.data, atol=1e-12)


def test_zero_sublayers_leave_double_layer_norm(encouragement):
    config = tiny_config("none")
    model, tree = make_model(config, encouragement)
    layer = LayerParams.of(model.params, 1, config)
    for t in (layer.W1, layer.W2, layer.b1, layer.b2, layer.WO):
        zeroed(t)
    for head in layer.heads:
        for t in (head.WQ, head.bQ, head.WK, head.WV, head.bV):
            zeroed(t)
    syntax = build_input(encouragement, 3, tree, config, model.vocabs, model.params)
    x = np.random.default_rng(8).normal(size=(6, config.d_model))
    out = encoder_block(tc.Tensor(x), layer, syntax, config, 1)
    ones, zeros = np.ones(config.d_model), np.zeros(config.d_model)
    expected = tc.layer_norm(tc.layer_norm(x, ones, zeros), ones, zeros)
    np.testing.assert_allclose(out.data, expected.data, atol=1e-12)


def test_block_order_matters(encouragement):
    config = tiny_config("none")
    model, tree = make_model(config, encouragement)
    swapped = tiny_config("none", ffn_first=False)
    a = forward(encouragement, 3, tree, config, model.params, model.vocabs)
    b = forward(encouragement, 3, tree, swapped, model.params, model.vocabs)
    assert not np.allclose(a.data, b.data)


def test_block_gradients(encouragement):
    config = tiny_config("none")
    model, tree = make_model(config, encouragement)
    layer = LayerParams.of(model.params, 1, config)
    syntax = build_input(encouragement, 3, tree, config, model.vocabs, model.params)
    x = tc.Tensor(np.random.default_rng(9).normal(size=(6, config.d_model)), True, "x")
    inputs = [x] + [p for name, p in model.params.items() if name.startswith("block1.")]
    report = tc.grad_check(lambda *_: encoder_block(x, layer, syntax, config, 1), inputs,
                           tol=1e-3, max_elements=8)
    assert report.passed, report.errors


@pytest.mark.parametrize("mode, reprs", [("none", ()), ("input", ("dep",)), ("lisa", ("rel", "relpath")),
                                         ("relawe", ("dep", "rel"))])
def test_end_to_end_gradients(two_predicates, mode, reprs):
    config = tiny_config(mode, reprs)
    model, tree = make_model(config, two_predicates)
    assert two_predicates.tokens and len(two_predicates) == 5 and config.n_heads == 2
    params = list(model.params.values())
    report = tc.grad_check(lambda *_: model.forward(two_predicates, 2, tree), params,
                           tol=1e-3, max_elements=6)
    assert report.passed, {k: v for k, v in report.errors.items() if v >= 1e-3}


def test_eval_forward_is_deterministic(encouragement):
    config = tiny_config("relawe", ("dep", "rel"))
    model, tree = make_model(config, encouragement)
    np.testing.assert_array_equal(model.forward(encouragement, 3, tree).data, model.forward(encouragement, 3, tree).data)


def test_positions_make_order_matter():
    rows = [row(1, "政府", 2, "SBJ", roles=["A0"]), row(2, "鼓励", 0, "ROOT", sense="鼓励.01", roles=[None]),
            row(3, "企业", 2, "OBJ", roles=["A1"])]
    reversed_rows = [row(1, "企业", 2, "OBJ", roles=["A1"]), row(2, "鼓励", 0, "ROOT", sense="鼓励.01", roles=[None]),
                     row(3, "政府", 2, "SBJ", roles=["A0"])]
    s, r = parse_sentence(rows), parse_sentence(reversed_rows)
    config = tiny_config("none")
    model, _ = make_model(config, s)
    a = model.forward(s, 2, None).data
    b = model.forward(r, 2, None).data
    assert not np.allclose(a[::-1], b)


def test_predict_roles(encouragement):
    config = tiny_config("none")
    model, _ = make_model(config, encouragement)
    roles = model.vocabs["role"]
    assert predict_roles(np.zeros((3, len(roles))), roles) == (None, None, None)

    logits = np.full((3, len(roles)), -5.0)
    for i, label in enumerate(("A1", "_", "A0")):
        logits[i, roles.index[label]] = 5.0
    assert predict_roles(logits, roles) == ("A1", None, "A0")

    logits[0, 0] = np.nan
    with pytest.raises(NonFiniteLogits):
        predict_roles(logits, roles)


def test_predictions_are_reproducible(encouragement):
    config = tiny_config("lisa", ("rel",))
    first, tree = make_model(config, encouragement, seed=5)
    second, _ = make_model(config, encouragement, seed=5)
    assert first.predict(encouragement, tree) == second.predict(encouragement, tree)


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(d_w=3, d_t=2, d_p=4, head_dim=2).validate()
    with pytest.raises(ConfigError):
        tiny_config("lisa", ("deppath",))
    with pytest.raises(ConfigError):
        tiny_config("none", lisa_layer=3)
    with pytest.raises(ConfigError):
        ModelConfig.from_dict({"mode": "none", "heads": 3})
    with pytest.raises(ConfigError):
        ModelConfig(mode="relawe").validate()


def test_odd_model_width_rejected_before_forward():
    config = ModelConfig(d_w=6, d_t=2, d_p=1, head_dim=3, n_blocks=1, d_ff=4)
    assert (config.d_model, config.n_heads) == (9, 3)
    with pytest.raises(ConfigError) as err:
        config.validate()
    assert "even" in str(err.value)


def test_token_vocab_kinds(encouragement):
    roles = build_token_vocab([encouragement], "role")
    assert roles.strings[0] == "_" and roles.unk_id is None
    assert len(build_token_vocab([encouragement], "word")) == len(set(encouragement.forms)) + 2
    with pytest.raises(ConfigError) as err:
        build_token_vocab([], "lemma")
    assert "lemma" in str(err.value)


def test_published_defaults():
    config = ModelConfig(mode="relawe", representation=("rel", "dep")).validate()
    assert (config.d_model, config.n_heads, config.n_blocks) == (250, 10, 10)
    assert config.representation == ("dep", "rel")


def test_config_lines_round_trip():
    config = tiny_config("lisa", ("rel", "relpath"), ffn_first=False, dropout_res=0.25)
    assert ModelConfig.from_lines(config.to_lines()) == config


def test_checkpoint_round_trip(tmp_path, encouragement):
    config = tiny_config("relawe", ("dep", "rel", "relpath"))
    model, tree = make_model(config, encouragement)
    save_checkpoint(tmp_path, model)
    loaded, extra = load_checkpoint(tmp_path)
    assert extra == {}
    assert loaded.config == config
    assert vocab_sizes(loaded.vocabs) == vocab_sizes(model.vocabs)
    np.testing.assert_array_equal(loaded.forward(encouragement, 3, tree).data, model.forward(encouragement, 3, tree).data)


def test_checkpoint_vocab_mismatch_names_vocab(tmp_path, encouragement):
    config = tiny_config("input", ("rel",))
    model, _ = make_model(config, encouragement)
    save_checkpoint(tmp_path, model)
    path = tmp_path / "vocab.rel-label.tsv"
    lines = path.read_text(encoding="utf-8").splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n", encoding="utf-8")
    with pytest.raises(VocabMismatch) as err:
        load_checkpoint(tmp_path)
    assert "rel-label" in str(err.value)
