"""Knowledge graphs over museum collection records, with structured and
natural-language querying."""

from .bench import QAItem, generate_qa, gold_answer, load_qa, run_benchmark, score
from .builder import (
    BuildReport,
    GazetteerLinker,
    RelationMapping,
    build_graph,
    default_relation_mapping,
)
from .errors import MuseKGError
from .graph import (
    DEFAULT_RELATIONS,
    Edge,
    KnowledgeGraph,
    Node,
    NodeType,
    load_graph,
    save_graph,
)
from .ingest import (
    AttributeSchema,
    Record,
    canonical_key,
    normalize_text,
    parse_records,
)
from .nlq import HttpProvider, MockProvider, NLAnswer, answer_question, extract_entities
from .query import (
    QueryKind,
    QueryResult,
    RetrievedContext,
    StructuredQuery,
    execute,
    resolve_anchor,
    retrieve_context,
)

__version__ = "0.1.0"

__all__ = [
    "AttributeSchema",
    "BuildReport",
    "DEFAULT_RELATIONS",
    "Edge",
    "GazetteerLinker",
    "HttpProvider",
    "KnowledgeGraph",
    "MockProvider",
    "MuseKGError",
    "NLAnswer",
    "Node",
    "NodeType",
    "QAItem",
    "QueryKind",
    "QueryResult",
    "Record",
    "RelationMapping",
    "RetrievedContext",
    "StructuredQuery",
    "answer_question",
    "build_graph",
    "canonical_key",
    "default_relation_mapping",
    "execute",
    "extract_entities",
    "generate_qa",
    "gold_answer",
    "load_graph",
    "load_qa",
    "normalize_text",
    "parse_records",
    "resolve_anchor",
    "retrieve_context",
    "run_benchmark",
    "save_graph",
    "score",
]
