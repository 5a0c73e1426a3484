"""The hierarchical graph model.

One village becomes a bipartite graph: N input nodes (one per source, lifted
to a common width d) wired to M communication nodes (one per category).
Each layer first propagates input <-> communication features through a
symmetric-normalized GCN step, then exchanges information among the
communication nodes with single-head attention, and finally fuses the two
communication updates with a fixed convex weight.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import numgrad as ng
from .dataio import VillageSample
from .taxonomy import GraphSpec, build_input_adjacency


@dataclass
class ModelConfig:
    d: int = 512
    layers: int = 3
    beta: float = 0.6
    comm_edge_mode: str = "gat"      # gat | gcn
    init_mode: str = "random"        # random | mean
    expansion: str = "affine"        # affine | tile
    leaky_slope: float = 0.2

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError(f"layers must be >= 1, got {self.layers}")
        if not (0.0 <= self.beta <= 1.0):
            raise ValueError(f"beta must be in [0,1], got {self.beta}")
        if self.comm_edge_mode not in ("gat", "gcn"):
            raise ValueError(f"unknown comm_edge_mode {self.comm_edge_mode!r}")
        if self.init_mode not in ("random", "mean"):
            raise ValueError(f"unknown init_mode {self.init_mode!r}")
        if self.expansion not in ("affine", "tile"):
            raise ValueError(f"unknown expansion {self.expansion!r}")


class ModelParams:
    """All learnable weights of the trunk, as named leaf nodes.

    Registry order (used by the optimizer and the checkpoint format):
    expansion maps in roster order, then per-layer GCN weights, attention
    vectors and transforms, then the trainable communication init (random
    mode only).
    """

    def __init__(self, graph: GraphSpec, config: ModelConfig, seed: int):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
        d = config.d
        self.expansion: dict[str, tuple[ng.Node, ng.Node]] = {}
        if config.expansion == "affine":
            for s in graph.sources:
                if s.kind == "embedding":
                    continue
                self.expansion[s.id] = (
                    ng.parameter(_glorot(rng, s.input_dim, d), name=f"expansion.{s.id}.weight"),
                    ng.parameter(np.zeros((1, d)), name=f"expansion.{s.id}.bias"),
                )
        self.gcn_weights = [
            ng.parameter(_glorot(rng, d, d), name=f"gcn.{l}.weight")
            for l in range(config.layers)
        ]
        self.attn_vectors = [
            ng.parameter(_glorot(rng, 2 * d, 1), name=f"attn.{l}.vector")
            for l in range(config.layers)
        ]
        self.attn_transforms = [
            ng.parameter(_glorot(rng, d, d), name=f"attn.{l}.transform")
            for l in range(config.layers)
        ]
        self.comm_init: ng.Node | None = None
        if config.init_mode == "random":
            self.comm_init = ng.parameter(
                rng.normal(0.0, 0.02, size=(graph.n_comm, d)), name="comm_init"
            )

    def named_parameters(self) -> Iterator[tuple[str, ng.Node]]:
        for sid, (w, b) in self.expansion.items():
            yield w.name, w
            yield b.name, b
        for group in (self.gcn_weights, self.attn_vectors, self.attn_transforms):
            for p in group:
                yield p.name, p
        if self.comm_init is not None:
            yield self.comm_init.name, self.comm_init


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class ForwardTrace:
    """Every intermediate the forward pass produces, one entry per layer."""

    g_layers: list[ng.Node] = field(default_factory=list)   # layers+1 of N x d
    h_layers: list[ng.Node] = field(default_factory=list)   # layers+1 of M x d
    h_in_layers: list[ng.Node] = field(default_factory=list)
    h_ex_layers: list[ng.Node] = field(default_factory=list)
    attn: list[ng.Node] = field(default_factory=list)       # layers of M x M
    a_tilde: np.ndarray | None = None


# ---------------------------------------------------------------------------
# pipeline stages


def expand_features(
    sample: VillageSample, params: ModelParams, graph: GraphSpec, config: ModelConfig
) -> ng.Node:
    """Lift every source to a 1 x d row and stack them in roster order.

    Embeddings pass through untouched; facts go through their per-source
    affine map, or are tiled across d when the learnable expansion is
    ablated away.
    """
    rows = []
    for s in graph.sources:
        if s.kind == "embedding":
            vec = sample.embeddings.get(s.id)
            if vec is None:
                raise ValueError(f"{sample.village_id}: missing value for source {s.id!r}")
            if vec.shape[0] != config.d:
                raise ng.DimensionError(
                    f"embedding {s.id!r} has dim {vec.shape[0]}, model width is {config.d}"
                )
            rows.append(ng.constant(vec.reshape(1, -1)))
            continue
        vec = sample.facts.get(s.id)
        if vec is None:
            raise ValueError(f"{sample.village_id}: missing value for source {s.id!r}")
        if config.expansion == "affine":
            w, b = params.expansion[s.id]
            rows.append(ng.add(ng.matmul(ng.constant(vec.reshape(1, -1)), w), b))
        else:
            rows.append(ng.constant(np.resize(vec, config.d).reshape(1, -1)))
    return ng.concat_rows(rows)


def init_communication(
    mode: str, params: ModelParams, g0: ng.Node, graph: GraphSpec
) -> ng.Node:
    """Initial communication features: a trainable matrix, or per-category
    means of the attached input rows."""
    if mode == "random":
        assert params.comm_init is not None
        return params.comm_init
    rows = []
    for cat in graph.comm_categories:
        attached = [i for i, s in enumerate(graph.sources) if s.category == cat]
        rows.append(ng.mean_rows(g0, attached))
    return ng.concat_rows(rows)


def normalize_adjacency(a_in: np.ndarray) -> np.ndarray:
    """Symmetric normalization of the self-looped square bipartite adjacency.

    The printed N x M incidence cannot multiply the stacked (N+M)-row
    features, so the square form [[I, A], [A^T, I]] is built first; with
    self-loops every degree is positive.
    """
    n, m = a_in.shape
    if not np.isin(a_in, (0.0, 1.0)).all():
        raise ValueError("normalize_adjacency: incidence must be binary")
    if (a_in.sum(axis=1) < 1).any():
        raise ValueError("normalize_adjacency: every input node needs a connection")
    big = np.zeros((n + m, n + m))
    big[:n, :n] = np.eye(n)
    big[:n, n:] = a_in
    big[n:, :n] = a_in.T
    big[n:, n:] = np.eye(m)
    deg = big.sum(axis=1)
    assert (deg > 0).all(), "self-loops guarantee positive degree"
    dinv = 1.0 / np.sqrt(deg)
    # outer product keeps the result bitwise symmetric
    return big * np.outer(dinv, dinv)


def gcn_step(
    g: ng.Node, h: ng.Node, a_tilde: ng.Node, weight: ng.Node
) -> tuple[ng.Node, ng.Node]:
    """One propagation across the input edges; splits back into the input
    rows and the communication rows."""
    n = g.shape[0]
    stacked = ng.concat_rows([g, h])
    out = ng.relu(ng.matmul(ng.matmul(a_tilde, stacked), weight))
    return ng.slice_rows(out, 0, n), ng.slice_rows(out, n, out.shape[0])


def gat_step(
    h_in: ng.Node, attn_vector: ng.Node, attn_transform: ng.Node, slope: float
) -> tuple[ng.Node, ng.Node]:
    """Attention exchange over the complete self-looped communication graph.

    Pair score (i, j) is the attention vector applied to [h_i || h_j]; with
    the vector split in two halves this is a rank-one sum of per-node terms,
    so the full M x M score matrix comes from two matrix products.
    """
    m, d = h_in.shape
    first = ng.slice_rows(attn_vector, 0, d)
    second = ng.slice_rows(attn_vector, d, 2 * d)
    left = ng.matmul(h_in, first)    # M x 1, contribution of h_i
    right = ng.matmul(h_in, second)  # M x 1, contribution of h_j
    scores = ng.add(
        ng.matmul(left, ng.constant(np.ones((1, m)))),
        ng.matmul(ng.constant(np.ones((m, 1))), ng.transpose(right)),
    )
    alpha = ng.softmax_rows(ng.leaky_relu(scores, slope))
    h_ex = ng.relu(ng.matmul(alpha, ng.matmul(h_in, attn_transform)))
    return h_ex, alpha


def comm_edges_gcn_variant(
    h_in: ng.Node, attn_transform: ng.Node
) -> tuple[ng.Node, ng.Node]:
    """Ablation: attention frozen at uniform 1/M over the complete graph."""
    m = h_in.shape[0]
    alpha = ng.constant(np.full((m, m), 1.0 / m))
    h_ex = ng.relu(ng.matmul(alpha, ng.matmul(h_in, attn_transform)))
    return h_ex, alpha


def fuse(h_in: ng.Node, h_ex: ng.Node, beta: float) -> ng.Node:
    return ng.affine_combine(h_in, h_ex, beta)


def forward(
    sample: VillageSample,
    params: ModelParams,
    graph: GraphSpec,
    config: ModelConfig,
    a_tilde: ng.Node | None = None,
) -> ForwardTrace:
    """Full pass: expand, init, then `layers` rounds of propagate/attend/fuse."""
    if a_tilde is None:
        a_tilde = ng.constant(normalize_adjacency(build_input_adjacency(graph)))
    trace = ForwardTrace(a_tilde=a_tilde.value)
    g = expand_features(sample, params, graph, config)
    h = init_communication(config.init_mode, params, g, graph)
    trace.g_layers.append(g)
    trace.h_layers.append(h)
    for layer in range(config.layers):
        g, h_in = gcn_step(g, h, a_tilde, params.gcn_weights[layer])
        if config.comm_edge_mode == "gat":
            h_ex, alpha = gat_step(
                h_in, params.attn_vectors[layer], params.attn_transforms[layer],
                config.leaky_slope,
            )
        else:
            h_ex, alpha = comm_edges_gcn_variant(h_in, params.attn_transforms[layer])
        h = fuse(h_in, h_ex, config.beta)
        trace.g_layers.append(g)
        trace.h_in_layers.append(h_in)
        trace.h_ex_layers.append(h_ex)
        trace.attn.append(alpha)
        trace.h_layers.append(h)
    return trace


def attention_csv(alpha: np.ndarray, categories: tuple[str, ...]) -> str:
    """M x M attention matrix as CSV with category names on both axes."""
    if alpha.shape != (len(categories), len(categories)):
        raise ValueError(f"attention_csv: {alpha.shape} vs {len(categories)} categories")
    buf = io.StringIO()
    buf.write("," + ",".join(categories) + "\n")
    for name, row in zip(categories, alpha):
        buf.write(name + "," + ",".join(f"{v:.9f}" for v in row) + "\n")
    return buf.getvalue()
