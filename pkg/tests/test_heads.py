import numpy as np
import pytest

import village_hgnn.numgrad as ng
from village_hgnn.heads import (
    HeadParams,
    classify,
    joint_loss,
    predict_sample,
    prediction_dump,
    relation_pool,
)
from village_hgnn.taxonomy import default_schema
from gradcheck import finite_difference, max_rel_err


@pytest.fixture(autouse=True)
def f64_precision():
    ng.set_precision("f64")
    yield


def test_pool_singleton_copies_row():
    rng = np.random.default_rng(0)
    g = ng.constant(rng.normal(size=(6, 4)))
    pooled = relation_pool(g, {"S4": (3,)})
    np.testing.assert_array_equal(pooled["S4"].value, g.value[3:4])


def test_pool_identical_rows():
    row = np.array([1.0, 2.0, 3.0])
    g = ng.constant(np.stack([row, row, row * 5]))
    pooled = relation_pool(g, {"k": (0, 1)})
    np.testing.assert_allclose(pooled["k"].value[0], row)


def test_singleton_pool_end_to_end_default_schema():
    # R4 pools exactly one source: its pooled feature IS that node's row
    from village_hgnn.dataio import generate_synthetic
    from village_hgnn.model import forward
    from village_hgnn.trainer import TrainConfig, build_model

    schema = default_schema()
    assert schema.relation_map["R4"] == ("soc_road_length",)
    ds, _ = generate_synthetic(2, seed=0, noise=0.0, schema=schema)
    model = build_model(schema, TrainConfig(precision="f64"))
    trace = model.forward(ds.samples[0])
    g_final = trace.g_layers[-1]
    pooled = relation_pool(g_final, {"R4": schema.pool_indices()["R4"]})
    row = schema.graph.source_index("soc_road_length")
    np.testing.assert_array_equal(pooled["R4"].value[0], g_final.value[row])


def test_pool_matches_direct_mean_for_s2():
    schema = default_schema()
    rng = np.random.default_rng(1)
    g = ng.constant(rng.normal(size=(schema.graph.n_inputs, 8)))
    idx = schema.pool_indices()["S2"]
    assert len(idx) == 2  # altitude + elevation
    pooled = relation_pool(g, {"S2": idx})
    np.testing.assert_allclose(pooled["S2"].value[0], g.value[list(idx)].mean(axis=0), rtol=1e-12)


def test_classify_tie_break_lowest_index():
    w = ng.constant(np.zeros((4, 3)))
    b = ng.constant(np.zeros((1, 3)))
    f = ng.constant(np.ones((1, 4)))
    _, pred = classify(f, (w, b))
    assert pred == 0


def test_classify_dominated_by_bias():
    w = ng.constant(np.zeros((4, 3)))
    b = ng.constant(np.array([[0.0, 0.0, 10.0]]))
    f = ng.constant(np.ones((1, 4)))
    logits, pred = classify(f, (w, b))
    assert pred == 2
    np.testing.assert_array_equal(logits.value, [[0.0, 0.0, 10.0]])


def test_classify_gradient_through_head():
    rng = np.random.default_rng(2)
    w = ng.parameter(rng.normal(size=(4, 3)))
    b = ng.parameter(rng.normal(size=(1, 3)))
    f = ng.constant(rng.normal(size=(1, 4)))

    def loss_value():
        logits, _ = classify(f, (w, b))
        return float(ng.cross_entropy_logits(logits, 1).value[0, 0])

    logits, _ = classify(f, (w, b))
    ng.backward(ng.cross_entropy_logits(logits, 1), [w, b])
    fd = finite_difference(loss_value, [w.value, b.value])
    assert max_rel_err(w.grad, fd[0]) <= 1e-6
    assert max_rel_err(b.grad, fd[1]) <= 1e-6


def test_joint_loss_uniform_heads_table_counts():
    # all-zero logits: per-subtype CE is ln(C); the mean over the registry
    schema = default_schema()
    logits = {
        st.key: ng.constant(np.zeros((1, st.num_classes))) for st in schema.subtypes
    }
    labels = {st.key: 0 for st in schema.subtypes}
    total, per = joint_loss(logits, labels, list(schema.subtype_keys()))
    expected = sum(np.log(st.num_classes) for st in schema.subtypes) / 17.0
    np.testing.assert_allclose(total.value[0, 0], expected, rtol=1e-12)
    for st in schema.subtypes:
        np.testing.assert_allclose(per[st.key], np.log(st.num_classes), rtol=1e-12)


def test_joint_loss_singleton_is_plain_ce():
    logits = {"S1": ng.constant(np.array([[0.3, -0.2, 1.0]]))}
    total, per = joint_loss(logits, {"S1": 2}, ["S1"])
    np.testing.assert_allclose(total.value[0, 0], per["S1"], rtol=1e-12)


def test_joint_loss_mean_of_equal_losses():
    logits = {k: ng.constant(np.array([[1.0, -1.0]])) for k in ("a", "b", "c")}
    labels = {k: 0 for k in logits}
    total, per = joint_loss(logits, labels, list(logits))
    np.testing.assert_allclose(total.value[0, 0], per["a"], rtol=1e-12)


def test_joint_loss_permutation_invariant():
    rng = np.random.default_rng(3)
    logits = {f"k{i}": ng.constant(rng.normal(size=(1, 3))) for i in range(5)}
    labels = {k: int(rng.integers(3)) for k in logits}
    keys = list(logits)
    forward_order, _ = joint_loss(logits, labels, keys)
    backward_order, _ = joint_loss(logits, labels, keys[::-1])
    np.testing.assert_allclose(forward_order.value, backward_order.value, rtol=1e-12)


def test_joint_loss_missing_label():
    logits = {"S1": ng.constant(np.zeros((1, 3)))}
    with pytest.raises(ValueError, match="missing label"):
        joint_loss(logits, {}, ["S1"])


def test_logit_shift_invariance():
    rng = np.random.default_rng(4)
    raw = rng.normal(size=(1, 4))
    for shift in (0.0, 1.5, -3.0, 100.0):
        a = ng.cross_entropy_logits(ng.constant(raw), 2).value[0, 0]
        b = ng.cross_entropy_logits(ng.constant(raw + shift), 2).value[0, 0]
        assert abs(a - b) <= 1e-9
        assert np.argmax(raw) == np.argmax(raw + shift)


def test_predictions_pure_function_of_sample():
    schema = default_schema()
    rng = np.random.default_rng(5)
    heads = HeadParams(schema.subtypes, 16, seed=5)
    g = ng.constant(rng.normal(size=(schema.graph.n_inputs, 16)))
    first = predict_sample(g, schema.pool_indices(), heads)
    second = predict_sample(g, schema.pool_indices(), heads)
    for key in first:
        assert first[key].predicted_class == second[key].predicted_class
        np.testing.assert_array_equal(first[key].logits, second[key].logits)


def test_prediction_dump_shape():
    schema = default_schema()
    heads = HeadParams(schema.subtypes, 8, seed=6)
    g = ng.constant(np.random.default_rng(6).normal(size=(schema.graph.n_inputs, 8)))
    preds = predict_sample(g, schema.pool_indices(), heads)
    doc = prediction_dump("v1", preds, {st.key: st.class_names for st in schema.subtypes})
    assert doc["village_id"] == "v1"
    assert set(doc["subtypes"]) == set(schema.subtype_keys())
    s1 = doc["subtypes"]["S1"]
    assert len(s1["logits"]) == 3
    assert s1["predicted_name"] in schema.subtype("S1").class_names
    assert s1["pooled_norm"] >= 0.0
