"""In-memory typed property graph with canonical-key deduplication.

Nodes carry a closed node type and schema-restricted string attributes.
Edges are unique (source, relation, target) triples over a configurable
relation vocabulary. The store keeps three indexes: node id, normalised
title, and per-type canonical key.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import IO, NamedTuple, Sequence

from .errors import MuseKGError
from .ingest import AttributeSchema, NoCanonicalKeyError, canonical_key, normalize_text

log = logging.getLogger(__name__)

GRAPH_FORMAT_VERSION = 1


class NodeType(str, Enum):
    OBJECT = "object"
    PERSON = "person"
    ORGANISATION = "organisation"
    IMAGE = "image"
    IMAGE_LABEL = "image_label"
    PLACE = "place"
    CONCEPT = "concept"


DEFAULT_RELATIONS: tuple[str, ...] = (
    "has_primary_producer",
    "has_secondary_producer",
    "has_related_object",
    "has_image",
    "has_image_label",
    "has_entity",
    "belongs_to_collection",
)


class SchemaViolationError(MuseKGError):
    """An attribute key falls outside the graph's schema."""


class VocabularyError(MuseKGError):
    """A relation label falls outside the graph's vocabulary."""


class MissingNodeError(MuseKGError):
    """A node id was referenced but is not present."""


class FrozenGraphError(MuseKGError):
    """The graph was mutated after freeze()."""


class GraphLoadError(MuseKGError):
    """A serialised graph could not be read back."""


class GraphIntegrityError(MuseKGError):
    """An internal invariant does not hold."""


@dataclass
class Node:
    node_id: str
    node_type: NodeType
    attributes: dict[str, str] = field(default_factory=dict)
    canonical: str | None = None

    def title(self) -> str:
        """Display title: the name attribute, else the node id."""
        return self.attributes.get("name") or self.node_id


class Edge(NamedTuple):
    source: str
    relation: str
    target: str


class NeighborHit(NamedTuple):
    relation: str
    direction: str  # "out" or "in"
    node_id: str


def _safe_canonical(node: Node) -> str | None:
    try:
        return canonical_key(node)
    except NoCanonicalKeyError:
        return None  # node deduplicates by raw id only


class KnowledgeGraph:
    """Mutable until frozen; all reads are pure."""

    def __init__(
        self,
        schema: AttributeSchema | None = None,
        relations: Sequence[str] = DEFAULT_RELATIONS,
    ) -> None:
        self.schema = schema if schema is not None else AttributeSchema()
        self.relations = tuple(relations)
        if len(set(self.relations)) != len(self.relations):
            raise ValueError("relation vocabulary contains duplicates")
        self._relation_order = {r: i for i, r in enumerate(self.relations)}
        self.nodes: dict[str, Node] = {}
        self.edges: set[Edge] = set()
        self.title_index: dict[str, set[str]] = {}
        self.canonical_index: dict[tuple[NodeType, str], str] = {}
        self._out: dict[str, set[Edge]] = {}
        self._in: dict[str, set[Edge]] = {}
        self._frozen = False
        self.merge_count = 0

    # -- mutation ---------------------------------------------------------

    def _check_mutable(self) -> None:
        if self._frozen:
            raise FrozenGraphError("graph is frozen")

    def _check_attrs(self, node: Node) -> None:
        bad = [k for k in node.attributes if k not in self.schema]
        if bad:
            raise SchemaViolationError(
                f"attributes {bad} on {node.node_id} are outside the schema"
            )

    def add_node(self, node: Node) -> str:
        """Insert ``node`` or merge it into an existing duplicate.

        Duplicates are detected first by node id, then by canonical key
        within the node's type namespace. Returns the surviving node id.
        """
        self._check_mutable()
        self._check_attrs(node)
        if node.node_id in self.nodes:
            return self.merge_nodes(node.node_id, node)
        canonical = node.canonical if node.canonical is not None else _safe_canonical(node)
        node.canonical = canonical
        if canonical is not None:
            survivor = self.canonical_index.get((node.node_type, canonical))
            if survivor is not None:
                return self.merge_nodes(survivor, node)
        self.nodes[node.node_id] = node
        if canonical is not None:
            self.canonical_index[(node.node_type, canonical)] = node.node_id
        name = node.attributes.get("name")
        if name:
            self.title_index.setdefault(normalize_text(name), set()).add(node.node_id)
        return node.node_id

    def merge_nodes(self, surviving_id: str, duplicate: Node) -> str:
        """Fold ``duplicate`` into the node at ``surviving_id``.

        The survivor keeps all of its attributes; keys present only on the
        duplicate are added (first-seen wins). If the duplicate is itself a
        graph node, its edges are re-pointed to the survivor and deduplicated
        before it is removed.
        """
        self._check_mutable()
        survivor = self.nodes.get(surviving_id)
        if survivor is None:
            raise MissingNodeError(f"no node {surviving_id!r}")
        self._check_attrs(duplicate)
        self.merge_count += 1

        if duplicate.node_id != surviving_id and duplicate.node_id in self.nodes:
            self._remove_merged(surviving_id, duplicate.node_id)

        for key, value in duplicate.attributes.items():
            if key not in survivor.attributes:
                survivor.attributes[key] = value
                if key == "name" and value:
                    self.title_index.setdefault(normalize_text(value), set()).add(
                        surviving_id
                    )

        # Merging can upgrade the canonical key (a stub keyed by title gains
        # an accession number). Keep the key a pure function of the current
        # attributes, matching what a reload would compute.
        recomputed = _safe_canonical(survivor)
        if recomputed != survivor.canonical:
            old = survivor.canonical
            if old is not None and self.canonical_index.get(
                (survivor.node_type, old)
            ) == surviving_id:
                del self.canonical_index[(survivor.node_type, old)]
            survivor.canonical = recomputed
            if recomputed is not None:
                self.canonical_index.setdefault(
                    (survivor.node_type, recomputed), surviving_id
                )
        return surviving_id

    def _remove_merged(self, surviving_id: str, duplicate_id: str) -> None:
        stale = self.nodes.pop(duplicate_id)
        for edge in list(self._out.get(duplicate_id, ())) + list(
            self._in.get(duplicate_id, ())
        ):
            self._drop_edge(edge)
            src = surviving_id if edge.source == duplicate_id else edge.source
            dst = surviving_id if edge.target == duplicate_id else edge.target
            self._insert_edge(Edge(src, edge.relation, dst))
        self._out.pop(duplicate_id, None)
        self._in.pop(duplicate_id, None)
        if stale.canonical is not None:
            key = (stale.node_type, stale.canonical)
            if self.canonical_index.get(key) == duplicate_id:
                del self.canonical_index[key]
        name = stale.attributes.get("name")
        if name:
            bucket = self.title_index.get(normalize_text(name))
            if bucket:
                bucket.discard(duplicate_id)
                if not bucket:
                    del self.title_index[normalize_text(name)]

    def _drop_edge(self, edge: Edge) -> None:
        self.edges.discard(edge)
        self._out.get(edge.source, set()).discard(edge)
        self._in.get(edge.target, set()).discard(edge)

    def _insert_edge(self, edge: Edge) -> bool:
        if edge in self.edges:
            return False
        self.edges.add(edge)
        self._out.setdefault(edge.source, set()).add(edge)
        self._in.setdefault(edge.target, set()).add(edge)
        return True

    def add_edge(self, source: str, relation: str, target: str) -> bool:
        """Add one edge; returns False when the triple already exists."""
        self._check_mutable()
        if relation not in self._relation_order:
            raise VocabularyError(f"relation {relation!r} is outside the vocabulary")
        if source not in self.nodes:
            raise MissingNodeError(f"edge source {source!r} is not a node")
        if target not in self.nodes:
            raise MissingNodeError(f"edge target {target!r} is not a node")
        return self._insert_edge(Edge(source, relation, target))

    def freeze(self) -> None:
        self._frozen = True

    @property
    def frozen(self) -> bool:
        return self._frozen

    # -- reads ------------------------------------------------------------

    def _neighbor_sort_key(self, hit: NeighborHit) -> tuple[int, int, str, str]:
        node = self.nodes[hit.node_id]
        name = node.attributes.get("name", "")
        return (
            self._relation_order[hit.relation],
            0 if hit.direction == "out" else 1,
            normalize_text(name) if name else "",
            hit.node_id,
        )

    def neighbors(self, node_id: str) -> list[NeighborHit]:
        """Both edge directions, ordered by relation (vocabulary order),
        direction (out first), neighbour title, then node id."""
        if node_id not in self.nodes:
            raise MissingNodeError(f"no node {node_id!r}")
        hits = [
            NeighborHit(e.relation, "out", e.target) for e in self._out.get(node_id, ())
        ]
        hits += [
            NeighborHit(e.relation, "in", e.source) for e in self._in.get(node_id, ())
        ]
        hits.sort(key=self._neighbor_sort_key)
        return hits

    def find_by_title(self, title: str) -> set[str]:
        """Node ids whose name attribute normalises to the same text."""
        return set(self.title_index.get(normalize_text(title), ()))

    def node_counts_by_type(self) -> dict[str, int]:
        counts = {t.value: 0 for t in NodeType}
        for node in self.nodes.values():
            counts[node.node_type.value] += 1
        return {k: v for k, v in counts.items() if v}

    def edge_counts_by_relation(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for edge in self.edges:
            counts[edge.relation] = counts.get(edge.relation, 0) + 1
        return dict(sorted(counts.items(), key=lambda kv: self._relation_order[kv[0]]))

    # -- integrity --------------------------------------------------------

    def validate(self) -> None:
        """Raise :class:`GraphIntegrityError` when any invariant is broken."""
        problems: list[str] = []
        for edge in self.edges:
            if edge.source not in self.nodes or edge.target not in self.nodes:
                problems.append(f"dangling edge {edge}")
            if edge.relation not in self._relation_order:
                problems.append(f"edge {edge} uses an unknown relation")
        for node in self.nodes.values():
            for key in node.attributes:
                if key not in self.schema:
                    problems.append(f"{node.node_id} carries non-schema key {key!r}")
            name = node.attributes.get("name")
            if name and node.node_id not in self.title_index.get(normalize_text(name), ()):
                problems.append(f"{node.node_id} missing from title index")
        seen: dict[str, tuple[NodeType, str]] = {}
        for key, node_id in self.canonical_index.items():
            if node_id not in self.nodes:
                problems.append(f"canonical index points at missing node {node_id!r}")
            elif node_id in seen:
                problems.append(f"canonical keys {seen[node_id]} and {key} share {node_id}")
            else:
                seen[node_id] = key
        if problems:
            raise GraphIntegrityError("; ".join(problems))


def isomorphic(a: KnowledgeGraph, b: KnowledgeGraph) -> bool:
    """Same node ids, types, attributes and edge triples."""
    if set(a.nodes) != set(b.nodes) or a.edges != b.edges:
        return False
    return all(
        a.nodes[nid].node_type == b.nodes[nid].node_type
        and a.nodes[nid].attributes == b.nodes[nid].attributes
        for nid in a.nodes
    )


# -- persistence ------------------------------------------------------------


def _dumps(payload: dict) -> str:
    return json.dumps(payload, ensure_ascii=False, separators=(",", ":"))


def save_graph(graph: KnowledgeGraph, sink: str | Path | IO[str]) -> None:
    """Write the graph as NDJSON: header, nodes sorted by id, edges by triple.

    Serialisation is deterministic, and the graph is frozen afterwards.
    """
    graph.freeze()
    lines: list[str] = [
        _dumps(
            {
                "musekg_version": GRAPH_FORMAT_VERSION,
                "schema": list(graph.schema.keys),
                "relations": list(graph.relations),
            }
        )
    ]
    for node_id in sorted(graph.nodes):
        node = graph.nodes[node_id]
        lines.append(
            _dumps(
                {
                    "kind": "node",
                    "id": node.node_id,
                    "type": node.node_type.value,
                    "attrs": node.attributes,
                }
            )
        )
    for edge in sorted(graph.edges):
        lines.append(
            _dumps(
                {"kind": "edge", "src": edge.source, "rel": edge.relation, "dst": edge.target}
            )
        )
    text = "\n".join(lines) + "\n"
    if hasattr(sink, "write"):
        sink.write(text)  # type: ignore[union-attr]
    else:
        Path(sink).write_text(text, encoding="utf-8")  # type: ignore[arg-type]


def _load_lines(source: str | Path | IO[str]) -> list[str]:
    if hasattr(source, "read"):
        text = source.read()  # type: ignore[union-attr]
    else:
        text = Path(source).read_text(encoding="utf-8")  # type: ignore[arg-type]
    return text.splitlines()


def load_graph(source: str | Path | IO[str]) -> KnowledgeGraph:
    """Read a graph written by :func:`save_graph`; indexes are rebuilt."""
    lines = _load_lines(source)
    if not lines or not lines[0].strip():
        raise GraphLoadError("line 1: missing header")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise GraphLoadError(f"line 1: {exc.msg}") from exc
    if not isinstance(header, dict) or "musekg_version" not in header:
        raise GraphLoadError("line 1: not a graph header")
    if header["musekg_version"] != GRAPH_FORMAT_VERSION:
        raise GraphLoadError(
            f"line 1: unsupported musekg_version {header['musekg_version']!r}"
        )
    try:
        schema = AttributeSchema(tuple(header["schema"]))
        graph = KnowledgeGraph(schema=schema, relations=tuple(header["relations"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise GraphLoadError(f"line 1: bad header ({exc})") from exc

    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        try:
            entry = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise GraphLoadError(f"line {lineno}: {exc.msg}") from exc
        if not isinstance(entry, dict):
            raise GraphLoadError(f"line {lineno}: not an object")
        kind = entry.get("kind")
        if kind == "node":
            try:
                node = Node(
                    node_id=entry["id"],
                    node_type=NodeType(entry["type"]),
                    attributes=dict(entry["attrs"]),
                )
            except (KeyError, ValueError) as exc:
                raise GraphLoadError(f"line {lineno}: bad node ({exc})") from exc
            if node.node_id in graph.nodes:
                raise GraphLoadError(f"line {lineno}: duplicate node {node.node_id!r}")
            graph._check_attrs(node)
            node.canonical = _safe_canonical(node)
            graph.nodes[node.node_id] = node
            if node.canonical is not None:
                key = (node.node_type, node.canonical)
                # Keep the first owner; later claims would break injectivity.
                graph.canonical_index.setdefault(key, node.node_id)
            name = node.attributes.get("name")
            if name:
                graph.title_index.setdefault(normalize_text(name), set()).add(
                    node.node_id
                )
        elif kind == "edge":
            try:
                added = graph.add_edge(entry["src"], entry["rel"], entry["dst"])
            except KeyError as exc:
                raise GraphLoadError(f"line {lineno}: bad edge ({exc})") from exc
            except MuseKGError as exc:
                raise GraphLoadError(f"line {lineno}: {exc}") from exc
            if not added:
                raise GraphLoadError(f"line {lineno}: duplicate edge")
        else:
            raise GraphLoadError(f"line {lineno}: unknown kind {kind!r}")
    return graph
