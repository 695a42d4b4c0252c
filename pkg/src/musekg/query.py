"""Structured queries over the knowledge graph, plus context retrieval.

Three query kinds are supported: look up an attribute of a titled node,
list its neighbours under one relation, and read an attribute off those
neighbours. Context retrieval renders a node, its attributes, and its
one-hop neighbourhood (including neighbour attributes) as a plain-text
block under a character budget.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any, Mapping

from .errors import MuseKGError
from .graph import KnowledgeGraph, MissingNodeError, NodeType, VocabularyError
from .ingest import normalize_text

TRUNCATION_MARKER = "... (truncated for brevity)"

_TYPE_DISPLAY = {
    NodeType.OBJECT: "Object",
    NodeType.PERSON: "Person",
    NodeType.ORGANISATION: "Organisation",
    NodeType.IMAGE: "Image",
    NodeType.IMAGE_LABEL: "ImageLabel",
    NodeType.PLACE: "Place",
    NodeType.CONCEPT: "Concept",
}

# Anchor resolution prefers objects over people over organisations; other
# node types carry no priority among themselves.
_TYPE_PRIORITY = {
    NodeType.OBJECT: 0,
    NodeType.PERSON: 1,
    NodeType.ORGANISATION: 2,
}
_UNRANKED = 3


class AnchorNotFoundError(MuseKGError):
    """No node matches the anchor title."""


class AmbiguousAnchorError(MuseKGError):
    """Several nodes match and the tie-breaking rules cannot separate them."""

    def __init__(self, title: str, candidates: list[str]) -> None:
        super().__init__(
            f"anchor {title!r} is ambiguous between {', '.join(candidates)}"
        )
        self.candidates = candidates


class InvalidQueryError(MuseKGError):
    """The query is malformed or uses keys outside the schema/vocabulary."""


class QueryKind(str, Enum):
    ATTRIBUTE_LOOKUP = "attribute_lookup"
    FIND_RELATED = "find_related"
    ATTRIBUTE_OF_RELATED = "attribute_of_related"


@dataclass(frozen=True)
class StructuredQuery:
    object_title: str
    kind: QueryKind
    relationship: str | None = None
    target_attribute: str | None = None

    def __post_init__(self) -> None:
        needs_rel = self.kind in (QueryKind.FIND_RELATED, QueryKind.ATTRIBUTE_OF_RELATED)
        needs_attr = self.kind in (
            QueryKind.ATTRIBUTE_LOOKUP,
            QueryKind.ATTRIBUTE_OF_RELATED,
        )
        if needs_rel and not self.relationship:
            raise InvalidQueryError(f"{self.kind.value} requires a relationship")
        if needs_attr and not self.target_attribute:
            raise InvalidQueryError(f"{self.kind.value} requires a target_attribute")
        if not needs_rel and self.relationship:
            raise InvalidQueryError(f"{self.kind.value} does not take a relationship")
        if not needs_attr and self.target_attribute:
            raise InvalidQueryError(f"{self.kind.value} does not take a target_attribute")

    @classmethod
    def from_wire(cls, payload: Mapping[str, Any]) -> "StructuredQuery":
        """Build a query from the wire form; the kind is inferred from which
        of ``relationship`` / ``target_attribute`` are present."""
        title = payload.get("object_title")
        if not isinstance(title, str) or not title.strip():
            raise InvalidQueryError("object_title is required")
        relationship = payload.get("relationship") or None
        attribute = payload.get("target_attribute") or None
        if relationship is not None and not isinstance(relationship, str):
            raise InvalidQueryError("relationship must be a string")
        if attribute is not None and not isinstance(attribute, str):
            raise InvalidQueryError("target_attribute must be a string")
        if relationship and attribute:
            kind = QueryKind.ATTRIBUTE_OF_RELATED
        elif relationship:
            kind = QueryKind.FIND_RELATED
        elif attribute:
            kind = QueryKind.ATTRIBUTE_LOOKUP
        else:
            raise InvalidQueryError(
                "one of relationship or target_attribute is required"
            )
        return cls(title, kind, relationship, attribute)

    def to_wire(self) -> dict[str, str]:
        wire = {"object_title": self.object_title}
        if self.relationship:
            wire["relationship"] = self.relationship
        if self.target_attribute:
            wire["target_attribute"] = self.target_attribute
        return wire


@dataclass
class QueryResult:
    values: list[str]
    provenance: list[tuple[str, str]]

    def to_dict(self) -> dict[str, Any]:
        return {
            "values": self.values,
            "provenance": [list(entry) for entry in self.provenance],
        }


@dataclass
class RetrievedContext:
    node_id: str
    text: str
    budget_used: int


def _is_token_subsequence(needle: list[str], hay: list[str]) -> bool:
    i = 0
    for token in hay:
        if i < len(needle) and needle[i] == token:
            i += 1
    return i == len(needle)


def _priority(graph: KnowledgeGraph, node_id: str) -> int:
    return _TYPE_PRIORITY.get(graph.nodes[node_id].node_type, _UNRANKED)


def resolve_anchor(graph: KnowledgeGraph, title: str) -> str:
    """Resolve a query title to one node id.

    Exact normalised-title matches win; same-title collisions are broken by
    node type priority, then node id. Failing that, a node whose title
    contains the query as a token subsequence is used; if several such nodes
    survive the type-priority filter, the anchor is ambiguous.

    The result is invariant under normalising the input first.
    """
    query = normalize_text(title)
    if not query:
        raise AnchorNotFoundError("empty anchor title")
    exact = graph.find_by_title(query)
    if exact:
        return min(exact, key=lambda nid: (_priority(graph, nid), nid))
    query_tokens = query.split()
    candidates = set()
    for norm_title, node_ids in graph.title_index.items():
        if _is_token_subsequence(query_tokens, norm_title.split()):
            candidates.update(node_ids)
    if not candidates:
        raise AnchorNotFoundError(f"no node titled {title!r}")
    best = min(_priority(graph, nid) for nid in candidates)
    ranked = sorted(nid for nid in candidates if _priority(graph, nid) == best)
    if len(ranked) > 1:
        raise AmbiguousAnchorError(title, ranked)
    return ranked[0]


def _check_relation(graph: KnowledgeGraph, relation: str) -> None:
    if relation not in graph.relations:
        raise VocabularyError(f"relation {relation!r} is outside the vocabulary")


def _check_attribute(graph: KnowledgeGraph, key: str) -> None:
    if key not in graph.schema:
        raise InvalidQueryError(f"attribute {key!r} is outside the schema")


def attribute_lookup(graph: KnowledgeGraph, query: StructuredQuery) -> QueryResult:
    """Value of one attribute on the anchor node; empty when absent."""
    assert query.target_attribute is not None
    _check_attribute(graph, query.target_attribute)
    anchor = resolve_anchor(graph, query.object_title)
    value = graph.nodes[anchor].attributes.get(query.target_attribute)
    if value is None:
        return QueryResult([], [])
    return QueryResult([value], [(anchor, query.target_attribute)])


def _edge_ref(anchor: str, hit_relation: str, direction: str, neighbor: str) -> str:
    if direction == "out":
        return f"{anchor} -[{hit_relation}]-> {neighbor}"
    return f"{neighbor} -[{hit_relation}]-> {anchor}"


def find_related(graph: KnowledgeGraph, query: StructuredQuery) -> QueryResult:
    """Titles of neighbours under one relation, outgoing before incoming."""
    assert query.relationship is not None
    _check_relation(graph, query.relationship)
    anchor = resolve_anchor(graph, query.object_title)
    values: list[str] = []
    provenance: list[tuple[str, str]] = []
    for hit in graph.neighbors(anchor):
        if hit.relation != query.relationship:
            continue
        values.append(graph.nodes[hit.node_id].title())
        provenance.append(
            (hit.node_id, _edge_ref(anchor, hit.relation, hit.direction, hit.node_id))
        )
    return QueryResult(values, provenance)


def attribute_of_related(graph: KnowledgeGraph, query: StructuredQuery) -> QueryResult:
    """Attribute values read off neighbours under one relation."""
    assert query.relationship is not None and query.target_attribute is not None
    _check_relation(graph, query.relationship)
    _check_attribute(graph, query.target_attribute)
    anchor = resolve_anchor(graph, query.object_title)
    values: list[str] = []
    provenance: list[tuple[str, str]] = []
    for hit in graph.neighbors(anchor):
        if hit.relation != query.relationship:
            continue
        value = graph.nodes[hit.node_id].attributes.get(query.target_attribute)
        if value is None:
            continue
        values.append(value)
        ref = _edge_ref(anchor, hit.relation, hit.direction, hit.node_id)
        provenance.append((hit.node_id, f"{ref} @ {query.target_attribute}"))
    return QueryResult(values, provenance)


def execute(graph: KnowledgeGraph, query: StructuredQuery) -> QueryResult:
    if query.kind is QueryKind.ATTRIBUTE_LOOKUP:
        return attribute_lookup(graph, query)
    if query.kind is QueryKind.FIND_RELATED:
        return find_related(graph, query)
    return attribute_of_related(graph, query)


def retrieve_context(
    graph: KnowledgeGraph, node_id: str, budget: int = 4000
) -> RetrievedContext:
    """Plain-text context block for one node.

    Line 1 is ``<Type>: <title>``; then one ``- key: value`` line per
    attribute in schema order; one ``- relation -> title`` (or ``<-``) line
    per one-hop neighbour; then one ``- relation title key: value`` line per
    neighbour attribute so answers about related entities stay reachable.
    Lines past the budget are dropped and the truncation marker appended.
    """
    node = graph.nodes.get(node_id)
    if node is None:
        raise MissingNodeError(f"no node {node_id!r}")
    header = f"{_TYPE_DISPLAY[node.node_type]}: {node.title()}"
    if budget <= len(header):
        raise ValueError(f"budget {budget} does not cover the header line")

    lines: list[str] = []
    for key in graph.schema:
        if key in node.attributes:
            lines.append(f"- {key}: {node.attributes[key]}")
    hits = graph.neighbors(node_id)
    for hit in hits:
        arrow = "->" if hit.direction == "out" else "<-"
        lines.append(f"- {hit.relation} {arrow} {graph.nodes[hit.node_id].title()}")
    for hit in hits:
        neighbor = graph.nodes[hit.node_id]
        for key in graph.schema:
            if key == "name" or key not in neighbor.attributes:
                continue
            lines.append(
                f"- {hit.relation} {neighbor.title()} {key}: {neighbor.attributes[key]}"
            )

    kept = [header]
    used = len(header)
    truncated = False
    for line in lines:
        cost = len(line) + 1
        if used + cost > budget:
            truncated = True
            break
        kept.append(line)
        used += cost
    if truncated:
        kept.append(TRUNCATION_MARKER)
    text = "\n".join(kept)
    return RetrievedContext(node_id=node_id, text=text, budget_used=len(text))
