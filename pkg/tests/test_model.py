import numpy as np
import pytest

import village_hgnn.numgrad as ng
from village_hgnn import model as hg
from village_hgnn.dataio import generate_synthetic
from village_hgnn.model import (
    ModelConfig,
    ModelParams,
    attention_csv,
    comm_edges_gcn_variant,
    expand_features,
    forward,
    fuse,
    gat_step,
    gcn_step,
    init_communication,
    normalize_adjacency,
)
from village_hgnn.taxonomy import build_input_adjacency, default_schema
from gradcheck import finite_difference, max_rel_err
from naive_ref import naive_forward
from reduced import random_schema, random_sample


@pytest.fixture(autouse=True)
def f64_precision():
    ng.set_precision("f64")
    yield


def make_instance(seed, n=6, m=3, d=8, k=3, **cfg_overrides):
    rng = np.random.default_rng(seed)
    schema = random_schema(rng, n=n, m=m, d=d, k=k)
    sample = random_sample(rng, schema)
    config = ModelConfig(d=d, layers=cfg_overrides.pop("layers", 2), **cfg_overrides)
    params = ModelParams(schema.graph, config, seed=seed)
    return schema, sample, config, params


class _Bundle:
    """Duck-typed stand-in for trainer.Model, enough for the naive oracle."""

    def __init__(self, schema, config, params, heads=None):
        self.schema = schema
        self.config = config
        self.params = params
        self.heads = heads
        self.pool_idx = schema.pool_indices()


# ---------------------------------------------------------------------------
# feature expansion


def test_embedding_rows_pass_through_verbatim():
    schema, sample, config, params = make_instance(0)
    g0 = expand_features(sample, params, schema.graph, config)
    for i, s in enumerate(schema.graph.sources):
        if s.kind == "embedding":
            np.testing.assert_array_equal(g0.value[i], sample.embeddings[s.id].astype(np.float64))


def test_zero_fact_with_zero_bias_gives_zero_row():
    schema, sample, config, params = make_instance(1)
    fact_ids = [s.id for s in schema.fact_sources()]
    assert fact_ids, "instance needs at least one fact source"
    for sid in fact_ids:
        sample.facts[sid] = np.zeros_like(sample.facts[sid])
    g0 = expand_features(sample, params, schema.graph, config)
    for i, s in enumerate(schema.graph.sources):
        if s.kind != "embedding":
            np.testing.assert_array_equal(g0.value[i], np.zeros(config.d))


def test_default_width_matches_encoder():
    assert ModelConfig().d == 512
    assert all(s.input_dim == 512 for s in default_schema().embedding_sources())


def test_missing_source_value_raises():
    schema, sample, config, params = make_instance(2)
    sid = schema.graph.sources[0].id
    sample.embeddings.pop(sid, None)
    sample.facts.pop(sid, None)
    with pytest.raises(ValueError, match=sid):
        expand_features(sample, params, schema.graph, config)


def test_tile_expansion_replicates_scalar():
    schema, sample, config, params = make_instance(3)
    config = ModelConfig(d=config.d, layers=config.layers, expansion="tile")
    params = ModelParams(schema.graph, config, seed=3)
    g0 = expand_features(sample, params, schema.graph, config)
    for i, s in enumerate(schema.graph.sources):
        if s.kind == "scalar-fact":
            np.testing.assert_array_equal(g0.value[i], np.full(config.d, sample.facts[s.id][0]))


# ---------------------------------------------------------------------------
# communication init


def test_mean_init_singleton_categories():
    # one source per category: communication rows equal the input rows
    rng = np.random.default_rng(4)
    schema = random_schema(rng, n=3, m=3, d=8)
    sample = random_sample(rng, schema)
    config = ModelConfig(d=8, layers=1, init_mode="mean")
    params = ModelParams(schema.graph, config, seed=4)
    g0 = expand_features(sample, params, schema.graph, config)
    h0 = init_communication("mean", params, g0, schema.graph)
    for j, cat in enumerate(schema.graph.comm_categories):
        attached = [i for i, s in enumerate(schema.graph.sources) if s.category == cat]
        assert len(attached) == 1
        np.testing.assert_array_equal(h0.value[j], g0.value[attached[0]])


def test_random_init_deterministic_across_runs():
    schema, _, config, _ = make_instance(5)
    p1 = ModelParams(schema.graph, config, seed=99)
    p2 = ModelParams(schema.graph, config, seed=99)
    np.testing.assert_array_equal(p1.comm_init.value, p2.comm_init.value)


def test_mean_init_geography_row_is_mean_of_its_sources():
    schema = default_schema()
    config = ModelConfig(init_mode="mean")
    params = ModelParams(schema.graph, config, seed=6)
    ds, _ = generate_synthetic(2, seed=6, noise=0.0, schema=schema)
    g0 = expand_features(ds.samples[0], params, schema.graph, config)
    h0 = init_communication("mean", params, g0, schema.graph)
    geo_rows = [i for i, s in enumerate(schema.graph.sources) if s.category == "Geography"]
    assert len(geo_rows) == 11
    expected = g0.value[geo_rows].mean(axis=0)  # direct recomputation
    j = schema.graph.comm_categories.index("Geography")
    np.testing.assert_allclose(h0.value[j], expected, rtol=1e-12)


# ---------------------------------------------------------------------------
# normalized adjacency


def test_adjacency_minimal_case():
    a = normalize_adjacency(np.array([[1.0]]))
    np.testing.assert_allclose(a, [[0.5, 0.5], [0.5, 0.5]], atol=1e-15)


def test_adjacency_exactly_symmetric():
    a_in = build_input_adjacency(default_schema().graph)
    a = normalize_adjacency(a_in)
    assert np.array_equal(a, a.T)


def test_adjacency_default_roster_degree_formula():
    graph = default_schema().graph
    a_in = build_input_adjacency(graph)
    a = normalize_adjacency(a_in)
    n, m = a_in.shape
    assert a.shape == (34, 34)
    # recompute degrees from the incidence
    deg = np.concatenate([a_in.sum(axis=1) + 1.0, a_in.sum(axis=0) + 1.0])
    for i in range(n):
        assert deg[i] == 2.0
        assert a[i, i] == pytest.approx(0.5, abs=1e-12)
    for i in range(n + m):
        for j in range(n + m):
            big = 1.0 if i == j else 0.0
            if i < n and j >= n:
                big = a_in[i, j - n]
            elif i >= n and j < n:
                big = a_in[j, i - n]
            assert a[i, j] == pytest.approx(big / np.sqrt(deg[i] * deg[j]), abs=1e-12)


def test_adjacency_rejects_nonbinary():
    with pytest.raises(ValueError, match="binary"):
        normalize_adjacency(np.array([[0.5]]))


def test_adjacency_rejects_disconnected_input():
    with pytest.raises(ValueError, match="connection"):
        normalize_adjacency(np.array([[1.0, 0.0], [0.0, 0.0]]))


# ---------------------------------------------------------------------------
# layer steps


def test_gcn_step_identity_path():
    rng = np.random.default_rng(7)
    g = ng.constant(np.abs(rng.normal(size=(3, 4))))
    h = ng.constant(np.abs(rng.normal(size=(2, 4))))
    eye_a = ng.constant(np.eye(5))
    eye_w = ng.constant(np.eye(4))
    g_next, h_next = gcn_step(g, h, eye_a, eye_w)
    np.testing.assert_array_equal(g_next.value, g.value)
    np.testing.assert_array_equal(h_next.value, h.value)


def test_gcn_step_zero_features():
    a = ng.constant(normalize_adjacency(np.array([[1.0], [1.0]])))
    g = ng.constant(np.zeros((2, 4)))
    h = ng.constant(np.zeros((1, 4)))
    w = ng.constant(np.random.default_rng(8).normal(size=(4, 4)))
    g_next, h_next = gcn_step(g, h, a, w)
    np.testing.assert_array_equal(g_next.value, np.zeros((2, 4)))
    np.testing.assert_array_equal(h_next.value, np.zeros((1, 4)))


def test_gcn_step_matches_naive_summation():
    rng = np.random.default_rng(9)
    n, m, d = 4, 2, 5
    a_in = np.zeros((n, m))
    for i in range(n):
        a_in[i, rng.integers(m)] = 1.0
    a_in[0, :] = 0.0
    a_in[0, 0] = 1.0
    a_in[1, :] = 0.0
    a_in[1, 1] = 1.0  # both comm nodes attached
    a_tilde = normalize_adjacency(a_in)
    g = rng.normal(size=(n, d))
    h = rng.normal(size=(m, d))
    w = rng.normal(size=(d, d))
    g_next, h_next = gcn_step(ng.constant(g), ng.constant(h), ng.constant(a_tilde), ng.constant(w))
    stacked = np.concatenate([g, h])
    expected = np.zeros((n + m, d))
    for u in range(n + m):
        acc = np.zeros(d)
        for v in range(n + m):
            acc += a_tilde[u, v] * stacked[v]
        expected[u] = np.maximum(acc @ w, 0.0)
    np.testing.assert_allclose(np.concatenate([g_next.value, h_next.value]), expected, atol=1e-6)


def test_gat_identical_rows_give_uniform_attention():
    rng = np.random.default_rng(10)
    d, m = 6, 4
    row = rng.normal(size=d)
    h = ng.constant(np.tile(row, (m, 1)))
    vec = ng.constant(rng.normal(size=(2 * d, 1)))
    w = ng.constant(rng.normal(size=(d, d)))
    _, alpha = gat_step(h, vec, w, 0.2)
    np.testing.assert_allclose(alpha.value, np.full((m, m), 1.0 / m), atol=1e-12)


def test_gat_single_node():
    rng = np.random.default_rng(11)
    d = 5
    h = ng.constant(rng.normal(size=(1, d)))
    vec = ng.constant(rng.normal(size=(2 * d, 1)))
    w = ng.constant(rng.normal(size=(d, d)))
    h_ex, alpha = gat_step(h, vec, w, 0.2)
    np.testing.assert_array_equal(alpha.value, [[1.0]])
    np.testing.assert_allclose(h_ex.value, np.maximum(h.value @ w.value, 0.0), atol=1e-12)


def test_gat_matches_naive_double_loop():
    rng = np.random.default_rng(12)
    m, d = 5, 8
    h = rng.normal(size=(m, d))
    vec = rng.normal(size=(2 * d, 1))
    w = rng.normal(size=(d, d))
    h_ex, alpha = gat_step(ng.constant(h), ng.constant(vec), ng.constant(w), 0.2)
    av = vec[:, 0]
    e = np.zeros((m, m))
    for i in range(m):
        for j in range(m):
            raw = av[:d] @ h[i] + av[d:] @ h[j]
            e[i, j] = raw if raw > 0 else 0.2 * raw
    expected_alpha = np.zeros((m, m))
    expected_out = np.zeros((m, d))
    for i in range(m):
        shifted = np.exp(e[i] - e[i].max())
        expected_alpha[i] = shifted / shifted.sum()
        acc = np.zeros(d)
        for j in range(m):
            acc += expected_alpha[i, j] * (h[j] @ w)
        expected_out[i] = np.maximum(acc, 0.0)
    np.testing.assert_allclose(alpha.value, expected_alpha, atol=1e-6)
    np.testing.assert_allclose(h_ex.value, expected_out, atol=1e-6)


def test_uniform_variant_equals_gat_when_attention_uniform():
    rng = np.random.default_rng(13)
    d, m = 6, 3
    row = rng.normal(size=d)
    h = ng.constant(np.tile(row, (m, 1)))  # identical rows -> learned alpha uniform
    vec = ng.constant(rng.normal(size=(2 * d, 1)))
    w = ng.constant(rng.normal(size=(d, d)))
    gat_out, gat_alpha = gat_step(h, vec, w, 0.2)
    var_out, var_alpha = comm_edges_gcn_variant(h, w)
    np.testing.assert_allclose(gat_alpha.value, var_alpha.value, atol=1e-12)
    np.testing.assert_allclose(gat_out.value, var_out.value, atol=1e-12)


def test_uniform_variant_single_node_equals_gat():
    rng = np.random.default_rng(14)
    d = 4
    h = ng.constant(rng.normal(size=(1, d)))
    vec = ng.constant(rng.normal(size=(2 * d, 1)))
    w = ng.constant(rng.normal(size=(d, d)))
    gat_out, _ = gat_step(h, vec, w, 0.2)
    var_out, _ = comm_edges_gcn_variant(h, w)
    np.testing.assert_allclose(gat_out.value, var_out.value, atol=1e-12)


def test_uniform_variant_matches_naive():
    rng = np.random.default_rng(15)
    m, d = 4, 6
    h = rng.normal(size=(m, d))
    w = rng.normal(size=(d, d))
    out, alpha = comm_edges_gcn_variant(ng.constant(h), ng.constant(w))
    np.testing.assert_array_equal(alpha.value, np.full((m, m), 0.25))
    expected = np.zeros((m, d))
    for i in range(m):
        acc = np.zeros(d)
        for j in range(m):
            acc += (1.0 / m) * (h[j] @ w)
        expected[i] = np.maximum(acc, 0.0)
    np.testing.assert_allclose(out.value, expected, atol=1e-6)


def test_fuse_boundaries():
    rng = np.random.default_rng(16)
    a = ng.constant(rng.normal(size=(3, 4)))
    b = ng.constant(rng.normal(size=(3, 4)))
    assert np.array_equal(fuse(a, b, 1.0).value, a.value)
    assert np.array_equal(fuse(a, b, 0.0).value, b.value)
    np.testing.assert_allclose(fuse(a, b, 0.6).value, 0.6 * a.value + 0.4 * b.value)


# ---------------------------------------------------------------------------
# full forward


def test_forward_default_layer_count():
    assert ModelConfig().layers == 3


def test_forward_trace_shape_and_attention_rows():
    schema, sample, config, params = make_instance(17, layers=3)
    trace = forward(sample, params, schema.graph, config)
    assert len(trace.attn) == 3
    assert len(trace.g_layers) == 4
    assert len(trace.h_layers) == 4
    for alpha in trace.attn:
        np.testing.assert_allclose(alpha.value.sum(axis=1), 1.0, atol=1e-6)


def test_forward_matches_naive_oracle():
    for seed in range(5):
        rng = np.random.default_rng(100 + seed)
        n = int(rng.integers(4, 9))
        m = int(rng.integers(2, 5))
        d = int(rng.integers(4, 9))
        schema = random_schema(rng, n=n, m=m, d=d)
        sample = random_sample(rng, schema)
        config = ModelConfig(
            d=d,
            layers=int(rng.integers(1, 4)),
            beta=float(rng.uniform(0.1, 0.9)),
            init_mode=str(rng.choice(["random", "mean"])),
            comm_edge_mode=str(rng.choice(["gat", "gcn"])),
        )
        params = ModelParams(schema.graph, config, seed=seed)
        trace = forward(sample, params, schema.graph, config)
        bundle = _Bundle(schema, config, params)
        g_ref, h_ref, attn_ref = naive_forward(bundle, sample)
        assert np.abs(trace.g_layers[-1].value - g_ref).max() <= 1e-6
        assert np.abs(trace.h_layers[-1].value - h_ref).max() <= 1e-6
        for a, b in zip(trace.attn, attn_ref):
            assert np.abs(a.value - b).max() <= 1e-6


def test_beta_one_ignores_attention_parameters():
    schema, sample, config, params = make_instance(18, layers=2)
    config = ModelConfig(d=config.d, layers=2, beta=1.0)
    trace1 = forward(sample, params, schema.graph, config)
    for p in params.attn_vectors + params.attn_transforms:
        p.value = p.value + np.random.default_rng(19).normal(size=p.value.shape)
    trace2 = forward(sample, params, schema.graph, config)
    assert np.array_equal(trace1.h_layers[-1].value, trace2.h_layers[-1].value)
    assert np.array_equal(trace1.g_layers[-1].value, trace2.g_layers[-1].value)


def test_beta_zero_fused_equals_attention_output_per_layer():
    schema, sample, config, params = make_instance(20, layers=3)
    config = ModelConfig(d=config.d, layers=3, beta=0.0)
    trace = forward(sample, params, schema.graph, config)
    for h_fused, h_ex in zip(trace.h_layers[1:], trace.h_ex_layers):
        assert np.array_equal(h_fused.value, h_ex.value)


def test_beta_one_fused_equals_gcn_output_per_layer():
    schema, sample, config, params = make_instance(21, layers=3)
    config = ModelConfig(d=config.d, layers=3, beta=1.0)
    trace = forward(sample, params, schema.graph, config)
    for h_fused, h_in in zip(trace.h_layers[1:], trace.h_in_layers):
        assert np.array_equal(h_fused.value, h_in.value)


def test_permuting_roster_leaves_pooled_features_unchanged():
    from village_hgnn.taxonomy import GraphSpec, Schema, validate_schema

    rng = np.random.default_rng(22)
    schema = random_schema(rng, n=7, m=3, d=6)
    sample = random_sample(rng, schema)
    config = ModelConfig(d=6, layers=2)
    params = ModelParams(schema.graph, config, seed=22)

    perm = rng.permutation(len(schema.graph.sources))
    permuted_schema = Schema(
        graph=GraphSpec(
            sources=tuple(schema.graph.sources[i] for i in perm),
            comm_categories=schema.graph.comm_categories,
        ),
        subtypes=schema.subtypes,
        relation_map=schema.relation_map,  # ids, so indices follow the permutation
        model=schema.model,
        training=schema.training,
    )
    validate_schema(permuted_schema)
    # same per-source parameters, same sample values
    trace = forward(sample, params, schema.graph, config)
    trace_p = forward(sample, params, permuted_schema.graph, config)
    pooled = {k: ng.mean_rows(trace.g_layers[-1], idx).value
              for k, idx in schema.pool_indices().items()}
    pooled_p = {k: ng.mean_rows(trace_p.g_layers[-1], idx).value
                for k, idx in permuted_schema.pool_indices().items()}
    for k in pooled:
        assert np.abs(pooled[k] - pooled_p[k]).max() <= 1e-6


# ---------------------------------------------------------------------------
# gradients through the full stack


def _full_stack_loss(schema, sample, config, params, heads):
    from village_hgnn.heads import classify, joint_loss, relation_pool

    trace = forward(sample, params, schema.graph, config)
    pooled = relation_pool(trace.g_layers[-1], schema.pool_indices())
    logits = {k: classify(pooled[k], heads.heads[k])[0] for k in pooled}
    total, _ = joint_loss(logits, sample.labels, list(schema.subtype_keys()))
    return total


def test_full_stack_gradients_match_finite_differences():
    from village_hgnn.heads import HeadParams

    schema, sample, config, params = make_instance(23, n=6, m=3, d=8, k=3, layers=2)
    heads = HeadParams(schema.subtypes, config.d, seed=23)
    named = dict(params.named_parameters())
    named.update(dict(heads.named_parameters()))
    nodes = list(named.values())

    total = _full_stack_loss(schema, sample, config, params, heads)
    ng.backward(total, nodes)
    analytic = {name: p.grad.copy() for name, p in named.items()}

    def loss_value():
        return float(_full_stack_loss(schema, sample, config, params, heads).value[0, 0])

    for name, p in named.items():
        fd = finite_difference(loss_value, [p.value])[0]
        err = max_rel_err(analytic[name], fd)
        assert err <= 1e-4, f"{name}: rel err {err:.2e}"


def test_attention_csv_format():
    alpha = np.full((5, 5), 0.2)
    text = attention_csv(alpha, ("Image", "Text", "Humanity", "Geography", "Society"))
    lines = text.strip().split("\n")
    assert lines[0] == ",Image,Text,Humanity,Geography,Society"
    assert len(lines) == 6
    assert lines[1].startswith("Image,0.200000000,")
