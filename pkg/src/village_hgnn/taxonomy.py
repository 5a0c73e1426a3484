"""Dataset schema: input-source roster, communication-node categories, the
bipartite input adjacency, the 17-subtype registry, and the per-subtype
relation map used by pooling.

The whole registry is data, shipped as a built-in default and editable
through a single JSON config document (`schema_version: 1`).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

SCHEMA_VERSION = 1

CATEGORIES = ("Image", "Text", "Humanity", "Geography", "Society")
KINDS = ("embedding", "scalar-fact", "vector-fact")
GROUPS = ("S", "V", "R")

EMBED_DIM = 512
ADMIN_ONE_HOT_DIM = 8  # configurable through the config document


class SchemaError(ValueError):
    """Config document violates the schema; `path` locates the offence."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class SourceDescriptor:
    id: str
    category: str
    kind: str
    input_dim: int


@dataclass(frozen=True)
class SubtypeDescriptor:
    key: str
    group: str
    num_classes: int
    class_names: tuple[str, ...]


@dataclass(frozen=True)
class GraphSpec:
    """Node roster for the bipartite input graph."""

    sources: tuple[SourceDescriptor, ...]
    comm_categories: tuple[str, ...]

    @property
    def n_inputs(self) -> int:
        return len(self.sources)

    @property
    def n_comm(self) -> int:
        return len(self.comm_categories)

    def source_index(self, source_id: str) -> int:
        for i, s in enumerate(self.sources):
            if s.id == source_id:
                return i
        raise KeyError(source_id)


@dataclass
class Schema:
    """Fully validated registry plus the raw model/training config sections."""

    graph: GraphSpec
    subtypes: tuple[SubtypeDescriptor, ...]
    relation_map: dict[str, tuple[str, ...]]
    model: dict[str, Any] = field(default_factory=dict)
    training: dict[str, Any] = field(default_factory=dict)

    def subtype(self, key: str) -> SubtypeDescriptor:
        for s in self.subtypes:
            if s.key == key:
                return s
        raise KeyError(key)

    def subtype_keys(self, group: str | None = None) -> tuple[str, ...]:
        return tuple(s.key for s in self.subtypes if group is None or s.group == group)

    def pool_indices(self) -> dict[str, tuple[int, ...]]:
        """Relation map resolved to roster row indices."""
        return {
            key: tuple(self.graph.source_index(sid) for sid in sids)
            for key, sids in self.relation_map.items()
        }

    def embedding_sources(self) -> tuple[SourceDescriptor, ...]:
        return tuple(s for s in self.graph.sources if s.kind == "embedding")

    def fact_sources(self) -> tuple[SourceDescriptor, ...]:
        return tuple(s for s in self.graph.sources if s.kind != "embedding")


# ---------------------------------------------------------------------------
# built-in default registry

_DEFAULT_SOURCES: list[tuple[str, str, str, int]] = [
    # id, category, kind, input_dim
    ("img_texture", "Image", "embedding", EMBED_DIM),
    ("img_satellite", "Image", "embedding", EMBED_DIM),
    ("img_topographic", "Image", "embedding", EMBED_DIM),
    ("text_intro", "Text", "embedding", EMBED_DIM),
    # short humanity texts enter pre-embedded, like the main text source
    ("hum_folklore", "Humanity", "embedding", EMBED_DIM),
    ("hum_architecture", "Humanity", "embedding", EMBED_DIM),
    ("hum_clan", "Humanity", "embedding", EMBED_DIM),
    ("hum_village_history", "Humanity", "embedding", EMBED_DIM),
    ("hum_famous_people", "Humanity", "embedding", EMBED_DIM),
    ("geo_admin_division", "Geography", "vector-fact", ADMIN_ONE_HOT_DIM),
    ("geo_coordinates", "Geography", "vector-fact", 2),
    ("geo_altitude", "Geography", "scalar-fact", 1),
    ("geo_elevation", "Geography", "scalar-fact", 1),
    ("geo_water_density", "Geography", "scalar-fact", 1),
    ("geo_water_distance", "Geography", "scalar-fact", 1),
    ("geo_precipitation", "Geography", "scalar-fact", 1),
    ("geo_sunshine", "Geography", "scalar-fact", 1),
    ("geo_temperature", "Geography", "scalar-fact", 1),
    ("geo_arable_pct", "Geography", "scalar-fact", 1),
    ("geo_ndvi", "Geography", "scalar-fact", 1),
    ("soc_population_density", "Society", "scalar-fact", 1),
    ("soc_night_light", "Society", "scalar-fact", 1),
    ("soc_urbanization", "Society", "scalar-fact", 1),
    ("soc_poi_count", "Society", "scalar-fact", 1),
    ("soc_gdp", "Society", "scalar-fact", 1),
    ("soc_road_length", "Society", "scalar-fact", 1),
    ("soc_ancient_road_distance", "Society", "scalar-fact", 1),
    ("soc_texture_dispersion", "Society", "scalar-fact", 1),
    ("soc_texture_density", "Society", "scalar-fact", 1),
]

_DEFAULT_SUBTYPES: list[tuple[str, str, tuple[str, ...]]] = [
    ("S1", "S", ("Waterfield wedge village",
                 "Waterfield ring village with mountain cluster embracing outside",
                 "Mountain houses integrated with waterfield extending outward")),
    ("S2", "S", ("Mountain-near village", "Mountain-enclosed village",
                 "Mountain-pack village", "Village separated from mountains")),
    ("S3", "S", ("Single-river-adjacent village", "Single-river-crossing village",
                 "Multi-river-adjacent village", "Multi-river-crossing village",
                 "Lakeside village", "Lake-encircled village")),
    ("S4", "S", ("Field-near village", "Field-enclosed village")),
    ("S5", "S", ("Polder field type", "Waterfield type",
                 "Mountain-water type", "Mountain terraced field type")),
    ("S6", "S", ("Field-shaped", "Straight strip-shaped", "Free-form")),
    ("V1", "V", ("Finger-shaped", "Clustered", "Cluster-belt-shaped", "Belt-shaped")),
    ("V2", "V", ("Simple and smooth", "Complex and uneven")),
    ("V3", "V", ("Dispersed system", "Aggregated system")),
    ("V4", "V", ("Low-density parcels", "High-density parcels")),
    ("V5", "V", ("Large-parcel settlements", "Small-parcel settlements")),
    ("R1", "R", ("Road network along water and mountains",
                 "Road network crossing water systems")),
    ("R2", "R", ("Main road facing wind", "Main road avoiding wind",
                 "Low wind-direction relevance")),
    ("R3", "R", ("Low curvature", "Medium curvature", "High curvature")),
    ("R4", "R", ("High road network density", "Low road network density")),
    ("R5", "R", ("Narrow road network settlements", "Wide road network settlements")),
    ("R6", "R", ("Grid pattern", "Fishbone pattern", "Mixed pattern")),
]

_V_GROUP_FACTS = ("soc_texture_dispersion", "soc_texture_density", "soc_population_density")

_DEFAULT_RELATION_MAP: dict[str, tuple[str, ...]] = {
    "S1": ("geo_altitude", "geo_water_density", "geo_arable_pct"),
    "S2": ("geo_altitude", "geo_elevation"),
    "S3": ("geo_water_density", "geo_water_distance"),
    "S4": ("geo_arable_pct",),
    "S5": ("geo_altitude", "geo_water_density", "geo_arable_pct", "geo_ndvi"),
    "S6": ("geo_arable_pct", "geo_water_density"),
    "V1": _V_GROUP_FACTS,
    "V2": _V_GROUP_FACTS,
    "V3": _V_GROUP_FACTS,
    "V4": _V_GROUP_FACTS,
    "V5": _V_GROUP_FACTS,
    "R1": ("soc_road_length", "geo_water_density", "geo_altitude"),
    # no wind-direction fact exists in the roster; climate facts stand in
    "R2": ("geo_precipitation", "geo_sunshine", "geo_temperature"),
    "R3": ("soc_road_length", "geo_elevation"),
    "R4": ("soc_road_length",),
    "R5": ("soc_road_length", "soc_urbanization"),
    "R6": ("soc_road_length", "soc_poi_count", "soc_texture_dispersion"),
}

DEFAULT_MODEL_CONFIG: dict[str, Any] = {
    "d": 512,
    "layers": 3,
    "beta": 0.6,
    "comm_edge_mode": "gat",
    "init_mode": "random",
    "expansion": "affine",
    "leaky_slope": 0.2,
}

DEFAULT_TRAINING_CONFIG: dict[str, Any] = {
    "learning_rate": 1e-4,
    "epochs": 20,
    "seed": 0,
    "split_ratio": 0.8,
    "strategy": "overall",
    "precision": "f32",
    "weight_decay": 0.01,
    "adam_betas": [0.9, 0.999],
    "adam_eps": 1e-8,
}


def default_schema() -> Schema:
    """The built-in registry: N=29 sources, M=5 categories, 17 subtypes."""
    sources = tuple(SourceDescriptor(*row) for row in _DEFAULT_SOURCES)
    subtypes = tuple(
        SubtypeDescriptor(key, group, len(names), names)
        for key, group, names in _DEFAULT_SUBTYPES
    )
    schema = Schema(
        graph=GraphSpec(sources=sources, comm_categories=CATEGORIES),
        subtypes=subtypes,
        relation_map=dict(_DEFAULT_RELATION_MAP),
        model=dict(DEFAULT_MODEL_CONFIG),
        training=dict(DEFAULT_TRAINING_CONFIG),
    )
    validate_schema(schema)
    return schema


# ---------------------------------------------------------------------------
# validation, serialization, loading


def validate_schema(schema: Schema) -> None:
    """Assert every registry invariant; raises SchemaError on violation."""
    seen_ids: set[str] = set()
    for i, s in enumerate(schema.graph.sources):
        path = f"sources[{i}]"
        if s.category not in CATEGORIES:
            raise SchemaError(f"{path}.category", f"unknown category {s.category!r}")
        if s.kind not in KINDS:
            raise SchemaError(f"{path}.kind", f"unknown kind {s.kind!r}")
        if s.id in seen_ids:
            raise SchemaError(f"{path}.id", f"duplicate id {s.id!r}")
        seen_ids.add(s.id)
        if s.input_dim < 1:
            raise SchemaError(f"{path}.input_dim", "must be >= 1")
        if s.category not in schema.graph.comm_categories:
            raise SchemaError(
                f"{path}.category",
                f"{s.category!r} has no communication node in {schema.graph.comm_categories}",
            )
    for c in schema.graph.comm_categories:
        if c not in CATEGORIES:
            raise SchemaError("comm_categories", f"unknown category {c!r}")
        if not any(s.category == c for s in schema.graph.sources):
            raise SchemaError("comm_categories", f"orphan communication node {c!r}")

    seen_keys: set[str] = set()
    for i, st in enumerate(schema.subtypes):
        path = f"subtypes[{i}]"
        if st.group not in GROUPS:
            raise SchemaError(f"{path}.group", f"unknown group {st.group!r}")
        if st.key in seen_keys:
            raise SchemaError(f"{path}.key", f"duplicate key {st.key!r}")
        seen_keys.add(st.key)
        if st.num_classes != len(st.class_names):
            raise SchemaError(f"{path}.num_classes", "does not match class_names length")
        if st.num_classes < 2:
            raise SchemaError(f"{path}.num_classes", "must be >= 2")

    by_id = {s.id: s for s in schema.graph.sources}
    for key in seen_keys:
        if key not in schema.relation_map:
            raise SchemaError(f"relation_map.{key}", "missing relation set")
    for key, sids in schema.relation_map.items():
        path = f"relation_map.{key}"
        if key not in seen_keys:
            raise SchemaError(path, f"unknown subtype {key!r}")
        if len(sids) == 0:
            raise SchemaError(path, "relation set must be non-empty")
        for sid in sids:
            if sid not in by_id:
                raise SchemaError(path, f"unknown source id {sid!r}")
            if by_id[sid].category in ("Image", "Text"):
                raise SchemaError(path, f"{sid!r} is an {by_id[sid].category} source; "
                                        "image and text sources cannot appear in a relation set")


def build_input_adjacency(graph: GraphSpec) -> np.ndarray:
    """Binary N x M incidence: each source attaches to its category's node."""
    col = {c: j for j, c in enumerate(graph.comm_categories)}
    a = np.zeros((graph.n_inputs, graph.n_comm), dtype=np.float64)
    for i, s in enumerate(graph.sources):
        a[i, col[s.category]] = 1.0
    return a


def serialize_schema(schema: Schema) -> dict[str, Any]:
    """Canonical JSON-ready document; load_schema(serialize_schema(s)) == s."""
    return {
        "schema_version": SCHEMA_VERSION,
        "sources": [
            {"id": s.id, "category": s.category, "kind": s.kind, "input_dim": s.input_dim}
            for s in schema.graph.sources
        ],
        "comm_categories": list(schema.graph.comm_categories),
        "subtypes": [
            {"key": st.key, "group": st.group, "num_classes": st.num_classes,
             "class_names": list(st.class_names)}
            for st in schema.subtypes
        ],
        "relation_map": {k: list(v) for k, v in schema.relation_map.items()},
        "model": dict(schema.model),
        "training": dict(schema.training),
    }


def load_schema(document: Mapping[str, Any] | str | Path) -> Schema:
    """Parse and validate a config document (mapping, JSON string, or path)."""
    if isinstance(document, (str, Path)):
        p = Path(document)
        if p.exists():
            doc = json.loads(p.read_text())
        else:
            doc = json.loads(str(document))
    else:
        doc = dict(document)

    if doc.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError("schema_version", f"must be {SCHEMA_VERSION}")

    def need(mapping, key, path):
        if key not in mapping:
            raise SchemaError(f"{path}.{key}", "missing required field")
        return mapping[key]

    sources = []
    for i, row in enumerate(need(doc, "sources", "$")):
        path = f"sources[{i}]"
        sources.append(
            SourceDescriptor(
                id=str(need(row, "id", path)),
                category=str(need(row, "category", path)),
                kind=str(need(row, "kind", path)),
                input_dim=int(need(row, "input_dim", path)),
            )
        )
    comm = tuple(str(c) for c in doc.get("comm_categories", CATEGORIES))

    subtypes = []
    for i, row in enumerate(need(doc, "subtypes", "$")):
        path = f"subtypes[{i}]"
        names = tuple(str(n) for n in need(row, "class_names", path))
        subtypes.append(
            SubtypeDescriptor(
                key=str(need(row, "key", path)),
                group=str(need(row, "group", path)),
                num_classes=int(row.get("num_classes", len(names))),
                class_names=names,
            )
        )

    relation_map = {
        str(k): tuple(str(s) for s in v)
        for k, v in need(doc, "relation_map", "$").items()
    }

    schema = Schema(
        graph=GraphSpec(sources=tuple(sources), comm_categories=comm),
        subtypes=tuple(subtypes),
        relation_map=relation_map,
        model={**DEFAULT_MODEL_CONFIG, **doc.get("model", {})},
        training={**DEFAULT_TRAINING_CONFIG, **doc.get("training", {})},
    )
    validate_schema(schema)
    return schema
