import numpy as np
import pytest

from village_hgnn import taxonomy
from village_hgnn.taxonomy import (
    SchemaError,
    build_input_adjacency,
    default_schema,
    load_schema,
    serialize_schema,
    validate_schema,
)

# class counts per subtype in the default registry
EXPECTED_CLASSES = {
    "S1": 3, "S2": 4, "S3": 6, "S4": 2, "S5": 4, "S6": 3,
    "V1": 4, "V2": 2, "V3": 2, "V4": 2, "V5": 2,
    "R1": 2, "R2": 3, "R3": 3, "R4": 2, "R5": 2, "R6": 3,
}


def test_default_counts():
    schema = default_schema()
    assert schema.graph.n_inputs == 29
    assert schema.graph.n_comm == 5
    assert len(schema.subtypes) == 17
    assert sum(st.num_classes for st in schema.subtypes) == 49
    for st in schema.subtypes:
        assert st.num_classes == EXPECTED_CLASSES[st.key]
        assert len(st.class_names) == st.num_classes


def test_default_roster_composition():
    schema = default_schema()
    by_cat = {}
    for s in schema.graph.sources:
        by_cat.setdefault(s.category, []).append(s)
    assert len(by_cat["Image"]) == 3
    assert len(by_cat["Text"]) == 1
    assert len(by_cat["Humanity"]) == 5
    assert len(by_cat["Geography"]) == 11
    assert len(by_cat["Society"]) == 9
    # humanity facts enter pre-embedded
    assert all(s.kind == "embedding" and s.input_dim == 512 for s in by_cat["Humanity"])


def test_default_registry_validates():
    validate_schema(default_schema())


def test_adjacency_row_and_column_sums():
    schema = default_schema()
    a = build_input_adjacency(schema.graph)
    assert a.shape == (29, 5)
    np.testing.assert_array_equal(a.sum(axis=1), np.ones(29))
    cols = {c: j for j, c in enumerate(schema.graph.comm_categories)}
    assert a[:, cols["Geography"]].sum() == 11
    assert a[:, cols["Humanity"]].sum() == 5
    assert a[:, cols["Image"]].sum() == 3
    assert (a.sum(axis=0) >= 1).all()


def test_category_order_fixed():
    schema = default_schema()
    assert schema.graph.comm_categories == ("Image", "Text", "Humanity", "Geography", "Society")


def test_relation_map_excludes_image_and_text():
    schema = default_schema()
    by_id = {s.id: s for s in schema.graph.sources}
    for key, sids in schema.relation_map.items():
        assert len(sids) > 0
        for sid in sids:
            assert by_id[sid].category not in ("Image", "Text")


def test_round_trip_preserves_registry():
    schema = default_schema()
    doc = serialize_schema(schema)
    again = load_schema(doc)
    assert again.graph == schema.graph
    assert again.subtypes == schema.subtypes
    assert again.relation_map == schema.relation_map
    assert serialize_schema(again) == doc


def test_schema_version_mandatory():
    doc = serialize_schema(default_schema())
    doc.pop("schema_version")
    with pytest.raises(SchemaError, match="schema_version"):
        load_schema(doc)


def test_empty_relation_set_rejected():
    doc = serialize_schema(default_schema())
    doc["relation_map"]["S4"] = []
    with pytest.raises(SchemaError, match=r"relation_map\.S4"):
        load_schema(doc)


def test_relation_set_referencing_image_rejected():
    doc = serialize_schema(default_schema())
    doc["relation_map"]["S4"] = ["img_texture"]
    with pytest.raises(SchemaError, match="img_texture"):
        load_schema(doc)


def test_relation_set_referencing_text_rejected():
    doc = serialize_schema(default_schema())
    doc["relation_map"]["R1"] = ["text_intro"]
    with pytest.raises(SchemaError, match="text_intro"):
        load_schema(doc)


def test_unknown_category_rejected():
    doc = serialize_schema(default_schema())
    doc["sources"][0]["category"] = "Weather"
    with pytest.raises(SchemaError, match="Weather"):
        load_schema(doc)


def test_duplicate_id_rejected():
    doc = serialize_schema(default_schema())
    doc["sources"][1]["id"] = doc["sources"][0]["id"]
    with pytest.raises(SchemaError, match="duplicate"):
        load_schema(doc)


def test_orphan_communication_node_rejected():
    doc = serialize_schema(default_schema())
    doc["sources"] = [s for s in doc["sources"] if s["category"] != "Text"]
    # text_intro gone: relation maps unaffected, but Text comm node is orphaned
    with pytest.raises(SchemaError, match="orphan"):
        load_schema(doc)


def test_singleton_relation_set_default():
    schema = default_schema()
    assert schema.relation_map["R4"] == ("soc_road_length",)
    assert schema.relation_map["S4"] == ("geo_arable_pct",)


def test_pool_indices_resolve_in_roster_order():
    schema = default_schema()
    idx = schema.pool_indices()
    ids = [s.id for s in schema.graph.sources]
    for key, sids in schema.relation_map.items():
        assert idx[key] == tuple(ids.index(sid) for sid in sids)


def test_load_schema_from_path(tmp_path):
    import json

    p = tmp_path / "schema.json"
    p.write_text(json.dumps(serialize_schema(default_schema())))
    schema = load_schema(p)
    assert schema.graph.n_inputs == 29
