"""Knowledge-graph construction from parsed museum records.

Each record contributes an object node, nodes for its relationship targets,
image nodes, image-label nodes, collection nodes, and optional gazetteer
entity hits over its descriptive text. Raw relationship identifiers are
mapped onto the closed relation vocabulary through a configurable mapping
table; everything else is counted and reported, never silently dropped.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, NamedTuple, Protocol, Sequence

from .errors import MuseKGError
from .graph import DEFAULT_RELATIONS, KnowledgeGraph, Node, NodeType
from .ingest import AttributeSchema, Record, normalize_text

log = logging.getLogger(__name__)

# Relations produced structurally (from image entries, label fields,
# collection fields and linker hits) rather than through the mapping table.
RESERVED_RELATIONS: tuple[str, ...] = (
    "has_image",
    "has_image_label",
    "has_entity",
    "belongs_to_collection",
)

DEFAULT_LINKER_FIELDS: tuple[str, ...] = ("description", "material_desc")
DEFAULT_LABEL_FIELD = "image_label"
DEFAULT_COLLECTION_FIELD = "collection"

_TARGET_TYPES = {
    "person": NodeType.PERSON,
    "organisation": NodeType.ORGANISATION,
    "object": NodeType.OBJECT,
}
_LINKER_TYPES = {
    NodeType.PLACE: "place",
    NodeType.PERSON: "person",
    NodeType.CONCEPT: "concept",
}


class UnknownTargetTypeError(MuseKGError):
    """relatedRecordType outside the closed person/organisation/object set."""


class UnknownOriginError(MuseKGError):
    """Unrecognised provenance tag passed to assign_node_type."""


def assign_node_type(origin: str, detail: str | None = None) -> NodeType:
    """Node type for a provenance tag.

    ``origin`` is one of ``object-record``, ``relationship-target`` (with
    ``detail`` carrying the relatedRecordType), ``image-entry``,
    ``image-label`` or ``linker`` (with ``detail`` carrying the linked type).
    """
    if origin == "object-record":
        return NodeType.OBJECT
    if origin == "relationship-target":
        target = _TARGET_TYPES.get((detail or "").lower())
        if target is None:
            raise UnknownTargetTypeError(f"unknown relatedRecordType {detail!r}")
        return target
    if origin == "image-entry":
        return NodeType.IMAGE
    if origin == "image-label":
        return NodeType.IMAGE_LABEL
    if origin == "linker":
        for node_type, tag in _LINKER_TYPES.items():
            if tag == (detail or "").lower():
                return node_type
        raise UnknownTargetTypeError(f"linker cannot produce type {detail!r}")
    raise UnknownOriginError(f"unknown origin {origin!r}")


@dataclass(frozen=True)
class RelationMapping:
    """Raw relationship id -> (relation label, expected target type)."""

    entries: Mapping[str, tuple[str, NodeType]]

    def get(self, raw_id: str) -> tuple[str, NodeType] | None:
        return self.entries.get(raw_id)

    def mapped_relations(self) -> set[str]:
        return {relation for relation, _ in self.entries.values()}

    def check_coverage(self, vocabulary: Sequence[str]) -> None:
        """Every vocabulary label must be a mapping target or reserved."""
        missing = set(vocabulary) - self.mapped_relations() - set(RESERVED_RELATIONS)
        if missing:
            raise ValueError(
                f"relations {sorted(missing)} are neither mapped nor reserved"
            )

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any]) -> "RelationMapping":
        entries: dict[str, tuple[str, NodeType]] = {}
        for raw_id, spec in payload.items():
            if not isinstance(spec, Mapping):
                raise ValueError(f"mapping entry {raw_id!r} must be an object")
            relation = spec.get("relation")
            target_type = spec.get("target_type")
            if not isinstance(relation, str) or not relation:
                raise ValueError(f"mapping entry {raw_id!r} lacks a relation")
            entries[raw_id] = (relation, NodeType(target_type))
        return cls(entries)

    @classmethod
    def from_file(cls, path: str | Path) -> "RelationMapping":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict[str, dict[str, str]]:
        return {
            raw_id: {"relation": relation, "target_type": target.value}
            for raw_id, (relation, target) in self.entries.items()
        }


def default_relation_mapping() -> RelationMapping:
    return RelationMapping(
        {
            "object_prod_pri_person": ("has_primary_producer", NodeType.PERSON),
            "object_prod_pri_organisation": ("has_primary_producer", NodeType.ORGANISATION),
            "object_prod_sec_person": ("has_secondary_producer", NodeType.PERSON),
            "object_prod_sec_organisation": ("has_secondary_producer", NodeType.ORGANISATION),
            "object_rel_obj": ("has_related_object", NodeType.OBJECT),
            "object_entity": ("has_entity", NodeType.OBJECT),
        }
    )


def map_relation(raw_id: str, mapping: RelationMapping) -> str | None:
    """Vocabulary label for a raw relationship id, or None when unmapped."""
    entry = mapping.get(raw_id)
    return entry[0] if entry else None


class LinkedEntity(NamedTuple):
    surface: str
    node_type: NodeType
    canonical: str


class EntityLinker(Protocol):
    def link(self, text: str) -> list[LinkedEntity]: ...


class GazetteerLinker:
    """Longest-match, non-overlapping, left-to-right surface scan.

    Surfaces and canonical texts are normalised at construction, and the
    scan runs over the normalised input, so returned surfaces are substrings
    of the normalised text.
    """

    def __init__(self, entries: Mapping[str, tuple[NodeType, str]]) -> None:
        self._by_first: dict[str, list[tuple[tuple[str, ...], NodeType, str]]] = {}
        for surface, (node_type, canonical) in entries.items():
            if node_type not in _LINKER_TYPES:
                raise ValueError(f"gazetteer cannot target type {node_type.value!r}")
            tokens = tuple(normalize_text(surface).split())
            if not tokens:
                continue
            canon = normalize_text(canonical)
            if not canon:
                continue
            self._by_first.setdefault(tokens[0], []).append((tokens, node_type, canon))
        for bucket in self._by_first.values():
            bucket.sort(key=lambda item: len(item[0]), reverse=True)

    @classmethod
    def from_file(cls, path: str | Path) -> "GazetteerLinker":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        entries = {
            surface: (NodeType(spec["type"]), spec["canonical"])
            for surface, spec in payload.items()
        }
        return cls(entries)

    def link(self, text: str) -> list[LinkedEntity]:
        tokens = normalize_text(text).split()
        hits: list[LinkedEntity] = []
        i = 0
        while i < len(tokens):
            bucket = self._by_first.get(tokens[i])
            matched = False
            if bucket:
                for surface_tokens, node_type, canonical in bucket:
                    if tuple(tokens[i : i + len(surface_tokens)]) == surface_tokens:
                        hits.append(
                            LinkedEntity(" ".join(surface_tokens), node_type, canonical)
                        )
                        i += len(surface_tokens)
                        matched = True
                        break
            if not matched:
                i += 1
        return hits


def gazetteer_link(
    text: str, gazetteer: Mapping[str, tuple[NodeType, str]]
) -> list[LinkedEntity]:
    return GazetteerLinker(gazetteer).link(text)


def validate_schema(node: Node, schema: AttributeSchema) -> tuple[Node, list[str]]:
    """Restrict a node's attributes to the schema; returns (node, dropped keys)."""
    kept: dict[str, str] = {}
    dropped: list[str] = []
    for key, value in node.attributes.items():
        if key in schema:
            kept[key] = value
        else:
            dropped.append(key)
    return replace(node, attributes=kept), dropped


@dataclass
class BuildReport:
    """What one build run produced, and what it had to leave behind."""

    nodes_by_type: dict[str, int] = field(default_factory=dict)
    edges_by_relation: dict[str, int] = field(default_factory=dict)
    merged_nodes: int = 0
    dropped_attributes: int = 0
    rejects: int = 0
    unmapped_relations: int = 0
    duplicate_edges: int = 0
    relationship_entries: int = 0
    relationship_edges_created: int = 0
    relationship_edges_duplicate: int = 0
    reject_details: list[dict[str, str]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "nodes_by_type": self.nodes_by_type,
            "edges_by_relation": self.edges_by_relation,
            "merged_nodes": self.merged_nodes,
            "dropped_attributes": self.dropped_attributes,
            "rejects": self.rejects,
            "unmapped_relations": self.unmapped_relations,
            "duplicate_edges": self.duplicate_edges,
            "relationship_entries": self.relationship_entries,
            "relationship_edges_created": self.relationship_edges_created,
            "relationship_edges_duplicate": self.relationship_edges_duplicate,
            "reject_details": self.reject_details,
        }


def build_graph(
    records: Iterable[Record],
    mapping: RelationMapping | None = None,
    schema: AttributeSchema | None = None,
    linker: EntityLinker | None = None,
    *,
    relations: Sequence[str] = DEFAULT_RELATIONS,
    linker_fields: Sequence[str] = DEFAULT_LINKER_FIELDS,
    label_field: str = DEFAULT_LABEL_FIELD,
    collection_field: str = DEFAULT_COLLECTION_FIELD,
) -> tuple[KnowledgeGraph, BuildReport]:
    """Run the full construction pipeline over ``records``.

    Deterministic for a fixed input order; insertion-order insensitive up to
    graph isomorphism. Returns the validated graph and a build report.
    """
    mapping = mapping if mapping is not None else default_relation_mapping()
    graph = KnowledgeGraph(schema=schema, relations=relations)
    mapping.check_coverage(graph.relations)
    report = BuildReport()

    for record in records:
        attrs: dict[str, str] = {}
        labels: list[str] = []
        collections: list[str] = []
        for ident, values in record.field_sets:
            if not values:
                continue
            key = ident.strip().lower()
            if key == label_field:
                labels.extend(values)
            elif key == collection_field:
                collections.extend(values)
            elif key not in attrs:
                attrs[key] = values[0]

        node, dropped = validate_schema(
            Node(f"object:{record.object_id}", NodeType.OBJECT, attrs), graph.schema
        )
        report.dropped_attributes += len(dropped)
        object_id = graph.add_node(node)

        for ref in record.relationships:
            report.relationship_entries += len(ref.related_records)
            mapped = mapping.get(ref.relationship_id)
            if mapped is None:
                report.unmapped_relations += len(ref.related_records)
                log.debug("unmapped relationship id %r", ref.relationship_id)
                continue
            relation, expected_type = mapped
            try:
                target_type = assign_node_type(
                    "relationship-target", ref.related_record_type or expected_type.value
                )
            except UnknownTargetTypeError as exc:
                report.rejects += len(ref.related_records)
                report.reject_details.append(
                    {"object_id": record.object_id, "reason": str(exc)}
                )
                continue
            for related_id, title in ref.related_records:
                target_attrs = {"name": title} if title else {}
                target = Node(
                    f"{target_type.value}:{related_id}", target_type, target_attrs
                )
                target_id = graph.add_node(target)
                if graph.add_edge(object_id, relation, target_id):
                    report.relationship_edges_created += 1
                else:
                    report.relationship_edges_duplicate += 1
                    report.duplicate_edges += 1

        for image_id in record.image_ids:
            node_id = graph.add_node(Node(f"image:{image_id}", NodeType.IMAGE))
            if not graph.add_edge(object_id, "has_image", node_id):
                report.duplicate_edges += 1

        for label in labels:
            norm = normalize_text(label)
            if not norm:
                continue
            node_id = graph.add_node(
                Node(f"label:{norm}", NodeType.IMAGE_LABEL, {"name": label})
            )
            if not graph.add_edge(object_id, "has_image_label", node_id):
                report.duplicate_edges += 1

        for collection in collections:
            norm = normalize_text(collection)
            if not norm:
                continue
            node_id = graph.add_node(
                Node(f"concept:{norm}", NodeType.CONCEPT, {"name": collection})
            )
            if not graph.add_edge(object_id, "belongs_to_collection", node_id):
                report.duplicate_edges += 1

        if linker is not None:
            for field_name in linker_fields:
                text = record.first_value(field_name)
                if not text:
                    continue
                for hit in linker.link(text):
                    entity = Node(
                        f"{hit.node_type.value}:{hit.canonical}",
                        hit.node_type,
                        {"name": hit.canonical},
                    )
                    entity_id = graph.add_node(entity)
                    if not graph.add_edge(object_id, "has_entity", entity_id):
                        report.duplicate_edges += 1

    graph.validate()
    report.nodes_by_type = graph.node_counts_by_type()
    report.edges_by_relation = graph.edge_counts_by_relation()
    report.merged_nodes = graph.merge_count
    return graph, report
