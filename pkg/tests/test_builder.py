import json

import pytest

from musekg.builder import (
    GazetteerLinker,
    RelationMapping,
    UnknownOriginError,
    UnknownTargetTypeError,
    assign_node_type,
    build_graph,
    default_relation_mapping,
    gazetteer_link,
    map_relation,
    validate_schema,
)
from musekg.graph import Edge, Node, NodeType, isomorphic
from musekg.ingest import AttributeSchema, Record, RelationshipRef

from .conftest import load_fixture_records
from .synth import make_records


def test_golden_record_build(obj123_graph):
    g = obj123_graph
    assert set(g.nodes) == {"object:OBJ123", "person:3601", "image:20208"}
    anchor = g.nodes["object:OBJ123"]
    assert anchor.attributes["name"] == "Long Scale Galvanometer"
    assert anchor.attributes["material_desc"] == "aluminium and electronic components"
    assert g.nodes["person:3601"].attributes == {"name": "Walden Precision Apparatus Limited"}
    assert g.edges == {
        Edge("object:OBJ123", "has_primary_producer", "person:3601"),
        Edge("object:OBJ123", "has_image", "image:20208"),
    }


class TestAssignNodeType:
    def test_origins(self):
        assert assign_node_type("object-record") is NodeType.OBJECT
        assert assign_node_type("relationship-target", "person") is NodeType.PERSON
        assert assign_node_type("relationship-target", "Organisation") is NodeType.ORGANISATION
        assert assign_node_type("relationship-target", "object") is NodeType.OBJECT
        assert assign_node_type("image-entry") is NodeType.IMAGE
        assert assign_node_type("image-label") is NodeType.IMAGE_LABEL
        assert assign_node_type("linker", "place") is NodeType.PLACE
        assert assign_node_type("linker", "concept") is NodeType.CONCEPT

    def test_unknown_target_type(self):
        with pytest.raises(UnknownTargetTypeError):
            assign_node_type("relationship-target", "alien")
        with pytest.raises(UnknownTargetTypeError):
            assign_node_type("linker", "object")

    def test_unknown_origin(self):
        with pytest.raises(UnknownOriginError):
            assign_node_type("somewhere-else")


class TestRelationMapping:
    def test_default_table(self):
        mapping = default_relation_mapping()
        assert mapping.get("object_prod_pri_person") == ("has_primary_producer", NodeType.PERSON)
        assert mapping.get("object_rel_obj") == ("has_related_object", NodeType.OBJECT)
        assert mapping.get("object_entity") == ("has_entity", NodeType.OBJECT)
        assert map_relation("object_prod_sec_person", mapping) == "has_secondary_producer"
        assert map_relation("object_unknown", mapping) is None

    def test_dict_round_trip(self):
        mapping = default_relation_mapping()
        again = RelationMapping.from_dict(mapping.to_dict())
        assert again.entries == dict(mapping.entries)

    def test_from_dict_validation(self):
        with pytest.raises(ValueError):
            RelationMapping.from_dict({"x": "not-an-object"})
        with pytest.raises(ValueError):
            RelationMapping.from_dict({"x": {"target_type": "person"}})

    def test_coverage_check(self):
        mapping = default_relation_mapping()
        mapping.check_coverage(
            ("has_primary_producer", "has_image", "belongs_to_collection")
        )
        with pytest.raises(ValueError, match="holds_patent"):
            mapping.check_coverage(("has_primary_producer", "holds_patent"))

    def test_from_file(self, tmp_path):
        path = tmp_path / "mapping.json"
        path.write_text(json.dumps(default_relation_mapping().to_dict()), encoding="utf-8")
        assert RelationMapping.from_file(path).entries == dict(
            default_relation_mapping().entries
        )


class TestGazetteer:
    def test_longest_match_wins(self):
        hits = gazetteer_link(
            "made in New York",
            {
                "New York": (NodeType.CONCEPT, "New York City"),
                "york": (NodeType.CONCEPT, "York England"),
            },
        )
        assert [(h.surface, h.canonical) for h in hits] == [("new york", "new york city")]

    def test_non_overlapping_left_to_right(self):
        linker = GazetteerLinker(
            {
                "melbourne": (NodeType.PLACE, "Melbourne"),
                "university of melbourne": (NodeType.PLACE, "University of Melbourne"),
            }
        )
        hits = linker.link("Made in Melbourne, at the University of Melbourne.")
        assert [(h.surface, h.node_type, h.canonical) for h in hits] == [
            ("melbourne", NodeType.PLACE, "melbourne"),
            ("university of melbourne", NodeType.PLACE, "university of melbourne"),
        ]

    def test_only_entity_types_allowed(self):
        with pytest.raises(ValueError):
            GazetteerLinker({"thing": (NodeType.OBJECT, "thing")})

    def test_from_file(self, tmp_path):
        path = tmp_path / "gaz.json"
        path.write_text(
            json.dumps({"New York": {"type": "concept", "canonical": "New York City"}}),
            encoding="utf-8",
        )
        hits = GazetteerLinker.from_file(path).link("in new york today")
        assert [(h.node_type, h.canonical) for h in hits] == [
            (NodeType.CONCEPT, "new york city")
        ]


def test_validate_schema_drops_unknown_keys():
    node = Node("object:1", NodeType.OBJECT, {"name": "A", "weight": "2kg", "colour": "red"})
    kept, dropped = validate_schema(node, AttributeSchema())
    assert kept.attributes == {"name": "A"}
    assert sorted(dropped) == ["colour", "weight"]
    # the input node is not mutated
    assert "weight" in node.attributes


def rec(object_id, title=None, relationships=(), **fields):
    field_sets = []
    if title is not None:
        field_sets.append(("name", [title]))
    field_sets.extend((k, [v]) for k, v in fields.items())
    return Record(object_id, field_sets, list(relationships))


class TestBuildGraph:
    def test_unmapped_relations_counted(self):
        record = rec(
            "A",
            "Thing",
            [RelationshipRef("object_weird", "person", [("1", "X"), ("2", "Y")])],
        )
        graph, report = build_graph([record])
        assert report.unmapped_relations == 2
        assert report.relationship_entries == 2
        assert report.relationship_edges_created == 0
        assert set(graph.nodes) == {"object:A"}

    def test_unknown_target_type_rejected(self):
        record = rec(
            "A",
            "Thing",
            [RelationshipRef("object_prod_pri_person", "alien", [("1", "X")])],
        )
        _graph, report = build_graph([record])
        assert report.rejects == 1
        assert report.reject_details[0]["object_id"] == "A"
        assert "alien" in report.reject_details[0]["reason"]

    def test_entry_conservation(self):
        records = [
            rec(
                "A",
                "Alpha Thing",
                [
                    RelationshipRef("object_prod_pri_person", "person", [("1", "Maker")]),
                    RelationshipRef("object_weird", "person", [("2", "Nobody")]),
                    RelationshipRef("object_prod_pri_person", "alien", [("3", "Reject")]),
                    # a second identical link collapses into a duplicate edge
                    RelationshipRef("object_prod_pri_person", "person", [("1", "Maker")]),
                ],
            )
        ]
        _graph, report = build_graph(records)
        assert report.relationship_entries == 4
        assert (
            report.relationship_entries
            == report.relationship_edges_created
            + report.relationship_edges_duplicate
            + report.unmapped_relations
            + report.rejects
        )

    def test_build_idempotence(self):
        records = make_records(40, seed=3)
        once, _ = build_graph(records)
        twice, report = build_graph(records + records)
        assert isomorphic(once, twice)
        assert report.merged_nodes > 0

    def test_order_insensitivity(self):
        records = make_records(40, seed=4)
        forward, _ = build_graph(records)
        backward, _ = build_graph(list(reversed(records)))
        assert isomorphic(forward, backward)

    def test_dropped_attributes_counted(self):
        graph, report = build_graph([rec("A", "Thing", weight="2kg")])
        assert report.dropped_attributes == 1
        assert graph.nodes["object:A"].attributes == {"name": "Thing"}

    def test_first_value_wins_per_key(self):
        record = Record("A", [("name", ["First", "Second"]), ("name", ["Third"])])
        graph, _ = build_graph([record])
        assert graph.nodes["object:A"].attributes["name"] == "First"

    def test_labels_become_shared_nodes(self):
        records = [
            rec("A", "Alpha Thing", image_label="Catalogue Scan"),
            rec("B", "Beta Thing", image_label="catalogue  scan"),
        ]
        graph, _ = build_graph(records)
        label = graph.nodes["label:catalogue scan"]
        assert label.node_type is NodeType.IMAGE_LABEL
        assert label.attributes["name"] == "Catalogue Scan"
        assert Edge("object:A", "has_image_label", "label:catalogue scan") in graph.edges
        assert Edge("object:B", "has_image_label", "label:catalogue scan") in graph.edges

    def test_collections_become_concepts(self):
        graph, _ = build_graph([rec("A", "Alpha Thing", collection="Medical History Museum")])
        concept = graph.nodes["concept:medical history museum"]
        assert concept.node_type is NodeType.CONCEPT
        assert Edge("object:A", "belongs_to_collection", "concept:medical history museum") in graph.edges
        # the diverted fields never land on the object node
        assert "collection" not in graph.nodes["object:A"].attributes

    def test_blank_labels_skipped(self):
        graph, _ = build_graph([rec("A", "Alpha Thing", image_label="  !! ")])
        assert not any(n.startswith("label:") for n in graph.nodes)

    def test_linker_adds_entity_nodes(self):
        linker = GazetteerLinker({"melbourne": (NodeType.PLACE, "Melbourne")})
        graph, _ = build_graph(
            [rec("A", "Alpha Thing", description="Built in Melbourne around 1900")],
            linker=linker,
        )
        assert graph.nodes["place:melbourne"].node_type is NodeType.PLACE
        assert Edge("object:A", "has_entity", "place:melbourne") in graph.edges

    def test_stub_target_merges_with_full_record(self, certificate_graph):
        g = certificate_graph
        merged = g.nodes["object:OBJ901"]
        assert merged.attributes["name"] == "Testimonial of Merit"
        assert merged.attributes["accession_no"] == "MHM06682"
        assert Edge("object:OBJ900", "has_entity", "object:OBJ901") in g.edges
        assert g.merge_count == 1

    def test_target_without_title(self):
        record = rec(
            "A",
            "Alpha Thing",
            [RelationshipRef("object_prod_pri_person", "person", [("77", "")])],
        )
        graph, _ = build_graph([record])
        assert graph.nodes["person:77"].attributes == {}
        assert graph.nodes["person:77"].title() == "person:77"

    def test_report_counts_match_graph(self):
        records = load_fixture_records("certificate.json")
        graph, report = build_graph(records)
        assert sum(report.nodes_by_type.values()) == len(graph.nodes)
        assert sum(report.edges_by_relation.values()) == len(graph.edges)

    def test_accepts_any_iterable(self):
        graph, _ = build_graph(iter([rec("A", "Alpha Thing")]))
        assert "object:A" in graph.nodes

    def test_uncovered_vocabulary_rejected(self):
        from musekg.graph import DEFAULT_RELATIONS

        with pytest.raises(ValueError, match="holds_patent"):
            build_graph([], relations=DEFAULT_RELATIONS + ("holds_patent",))
