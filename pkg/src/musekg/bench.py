"""Question-answering benchmark harness and QA-pair generation.

Items fall into three categories: C1 asks for an attribute of a named
object, C2 asks what is related to it under one relation, and C3 asks for
an attribute of those related entities. Each item carries the structured
query that defines its gold answer, so a benchmark can score either the
structured engine or the natural-language pipeline against the same gold.
"""

from __future__ import annotations

import json
import logging
import random
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Any, Iterable, Mapping, Sequence

from .graph import KnowledgeGraph, NodeType, VocabularyError
from .ingest import Record, iter_json_values, normalize_text, record_to_json
from .nlq import ModelProvider, ProviderError, answer_question, ChatRequest
from .query import (
    AmbiguousAnchorError,
    AnchorNotFoundError,
    InvalidQueryError,
    QueryKind,
    StructuredQuery,
    execute,
)

log = logging.getLogger(__name__)

CATEGORIES: tuple[str, ...] = ("C1", "C2", "C3")

_KIND_BY_CATEGORY = {
    "C1": QueryKind.ATTRIBUTE_LOOKUP,
    "C2": QueryKind.FIND_RELATED,
    "C3": QueryKind.ATTRIBUTE_OF_RELATED,
}

VALUE_SEPARATOR = "; "

_C1_TEMPLATES = {
    "measurements": "What are the measurements for the {title}?",
}

_ATTR_WORDS = {
    "accession_no": "accession number",
    "material_desc": "material description",
}

_REL_PHRASES = {
    "has_primary_producer": "the primary producer of",
    "has_secondary_producer": "the secondary producer of",
    "has_related_object": "the object related to",
    "has_image": "the image of",
    "has_image_label": "the image label of",
    "has_entity": "the entity associated with",
    "belongs_to_collection": "the collection holding",
}

# Attribute preference for template questions; measurements first, then the
# remaining schema keys in schema order.
_C1_PREFERENCE = (
    "measurements",
    "accession_no",
    "credit_line",
    "production_date",
    "material_desc",
    "description",
    "object_type",
    "history_category",
)


@dataclass
class QAItem:
    question: str
    expected_answer: str
    category: str
    query_details: dict[str, str]

    def compiled(self) -> StructuredQuery:
        return StructuredQuery.from_wire(self.query_details)

    def to_dict(self) -> dict[str, Any]:
        return {
            "question": self.question,
            "expected_answer": self.expected_answer,
            "category": self.category,
            "query_details": self.query_details,
        }


@dataclass
class QAReject:
    item_index: int
    reason: str

    def to_dict(self) -> dict[str, Any]:
        return {"item_index": self.item_index, "reason": self.reason}


def _validate_item(payload: Any) -> QAItem:
    if not isinstance(payload, Mapping):
        raise ValueError("item is not a JSON object")
    question = payload.get("question")
    expected = payload.get("expected_answer")
    category = payload.get("category")
    details = payload.get("query_details")
    if not isinstance(question, str) or not question.strip():
        raise ValueError("question must be a non-empty string")
    if not isinstance(expected, str) or not expected.strip():
        raise ValueError("expected_answer must be a non-empty string")
    if category not in CATEGORIES:
        raise ValueError(f"category must be one of {', '.join(CATEGORIES)}")
    if not isinstance(details, Mapping):
        raise ValueError("query_details must be an object")
    item = QAItem(question, expected, category, dict(details))
    compiled = item.compiled()  # raises InvalidQueryError on bad shape
    if compiled.kind is not _KIND_BY_CATEGORY[category]:
        raise ValueError(
            f"category {category} expects a {_KIND_BY_CATEGORY[category].value} query,"
            f" got {compiled.kind.value}"
        )
    return item


def load_qa(source: str | bytes | Path | IO[str]) -> tuple[list[QAItem], list[QAReject]]:
    """Read QA items from NDJSON or a JSON array; malformed items are
    rejected with a reason and loading continues."""
    if hasattr(source, "read"):
        text = source.read()  # type: ignore[union-attr]
    elif isinstance(source, Path):
        text = source.read_text(encoding="utf-8")
    elif isinstance(source, bytes):
        text = source.decode("utf-8")
    else:
        text = source
    items: list[QAItem] = []
    rejects: list[QAReject] = []
    index = 0
    for value, _pos in iter_json_values(text):
        entries = value if isinstance(value, list) else [value]
        for entry in entries:
            try:
                items.append(_validate_item(entry))
            except (ValueError, InvalidQueryError) as exc:
                rejects.append(QAReject(index, str(exc)))
            index += 1
    return items, rejects


def gold_answer(graph: KnowledgeGraph, item: QAItem) -> str:
    """Execute the item's structured query; multiple values are joined in
    deterministic order."""
    result = execute(graph, item.compiled())
    return VALUE_SEPARATOR.join(result.values)


def score(predicted: str, expected: str) -> bool:
    """Normalised exact match, or the expected answer contained in the
    prediction after normalisation."""
    p = normalize_text(predicted)
    e = normalize_text(expected)
    if p == e:
        return True
    return bool(e) and e in p


@dataclass
class BenchReport:
    system: str
    provider: str | None
    total: int
    categories: dict[str, dict[str, Any]]
    latency: dict[str, dict[str, float]]
    rejects: int = 0
    items: list[dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "system": self.system,
            "provider": self.provider,
            "total": self.total,
            "categories": self.categories,
            "latency": self.latency,
            "rejects": self.rejects,
        }


def _latency_stats(entries: list[dict[str, Any]]) -> dict[str, dict[str, float]]:
    stages: dict[str, list[float]] = {}
    for entry in entries:
        for stage, value in entry["timings"].items():
            stages.setdefault(stage, []).append(value)
    return {
        stage: {
            "mean_ms": statistics.fmean(values),
            "p50_ms": statistics.median(values),
        }
        for stage, values in stages.items()
    }


def run_benchmark(
    graph: KnowledgeGraph,
    items: Sequence[QAItem],
    system: str = "structured",
    provider: ModelProvider | None = None,
    *,
    strict_gold: bool = False,
    context_budget: int = 4000,
    log_path: str | Path | None = None,
) -> BenchReport:
    """Run every item through the chosen system and score it.

    Each item is classified exactly once: correct, incorrect, or (for items
    whose structured query cannot be executed on this graph) unanswerable.
    Unanswerable items leave the accuracy denominator unless ``strict_gold``
    is set, in which case they count as wrong.
    """
    if system not in ("structured", "nlq"):
        raise ValueError(f"unknown system {system!r}")
    if system == "nlq" and provider is None:
        raise ValueError("the nlq system requires a provider")

    entries: list[dict[str, Any]] = []
    for item in items:
        verdict: str
        predicted = ""
        start = time.perf_counter()
        if system == "structured":
            try:
                result = execute(graph, item.compiled())
                predicted = VALUE_SEPARATOR.join(result.values)
                verdict = "correct" if score(predicted, item.expected_answer) else "incorrect"
            except (
                AnchorNotFoundError,
                AmbiguousAnchorError,
                InvalidQueryError,
                VocabularyError,
            ) as exc:
                verdict = "unanswerable"
                log.debug("unanswerable item %r: %s", item.question, exc)
            timings = {"execute_ms": (time.perf_counter() - start) * 1000.0}
        else:
            assert provider is not None
            try:
                answer = answer_question(
                    item.question, graph, provider, context_budget=context_budget
                )
                predicted = answer.answer
                timings = dict(answer.timings)
                verdict = "correct" if score(predicted, item.expected_answer) else "incorrect"
            except ProviderError as exc:
                log.warning("provider failed on %r: %s", item.question, exc)
                timings = {"total_ms": (time.perf_counter() - start) * 1000.0}
                verdict = "incorrect"
        entries.append(
            {
                "question": item.question,
                "category": item.category,
                "expected": item.expected_answer,
                "predicted": predicted,
                "verdict": verdict,
                "timings": timings,
            }
        )

    categories: dict[str, dict[str, Any]] = {}
    for category in CATEGORIES:
        rows = [e for e in entries if e["category"] == category]
        if not rows:
            continue
        correct = sum(1 for e in rows if e["verdict"] == "correct")
        unanswerable = sum(1 for e in rows if e["verdict"] == "unanswerable")
        incorrect = len(rows) - correct - unanswerable
        denominator = len(rows) if strict_gold else len(rows) - unanswerable
        categories[category] = {
            "total": len(rows),
            "correct": correct,
            "incorrect": incorrect,
            "unanswerable": unanswerable,
            "accuracy": (correct / denominator) if denominator else None,
        }

    report = BenchReport(
        system=system,
        provider=provider.identity if provider else None,
        total=len(entries),
        categories=categories,
        latency=_latency_stats(entries),
        items=entries,
    )
    if log_path is not None:
        with open(log_path, "w", encoding="utf-8") as handle:
            for entry in entries:
                handle.write(json.dumps(entry, ensure_ascii=False) + "\n")
    return report


# -- generation ---------------------------------------------------------------


def _attr_words(key: str) -> str:
    return _ATTR_WORDS.get(key, key.replace("_", " "))


def _rel_phrase(relation: str) -> str:
    return _REL_PHRASES.get(relation, f"the {relation.replace('_', ' ')} of")


def _c1_phrase(key: str, title: str) -> str:
    template = _C1_TEMPLATES.get(key)
    if template is not None:
        return template.replace("{title}", title)
    return f"What is the {_attr_words(key)} of the {title}?"


def _object_nodes(graph: KnowledgeGraph) -> list[str]:
    return sorted(
        nid
        for nid, node in graph.nodes.items()
        if node.node_type is NodeType.OBJECT and node.attributes.get("name")
    )


def _question_item(
    graph: KnowledgeGraph, question: str, query: StructuredQuery, category: str
) -> QAItem | None:
    expected = VALUE_SEPARATOR.join(execute(graph, query).values)
    if not expected.strip():
        return None
    return QAItem(question, expected, category, query.to_wire())


def _generate_template(
    graph: KnowledgeGraph, n_per_category: int, seed: int
) -> list[QAItem]:
    rng = random.Random(seed)
    object_ids = _object_nodes(graph)
    attr_preference = [k for k in _C1_PREFERENCE if k in graph.schema]
    attr_preference += [
        k for k in graph.schema if k != "name" and k not in attr_preference
    ]

    items: list[QAItem] = []

    # C1: attribute of the object itself.
    pool = object_ids[:]
    rng.shuffle(pool)
    count = 0
    for index, nid in enumerate(pool):
        if count == n_per_category:
            break
        node = graph.nodes[nid]
        present = [k for k in attr_preference if k in node.attributes]
        if not present:
            continue
        key = present[index % len(present)]
        title = node.attributes["name"]
        question = _c1_phrase(key, title)
        query = StructuredQuery(title, QueryKind.ATTRIBUTE_LOOKUP, target_attribute=key)
        item = _question_item(graph, question, query, "C1")
        if item is not None:
            items.append(item)
            count += 1
    if count < n_per_category:
        log.warning("generated %d C1 items of %d requested", count, n_per_category)

    # C2: neighbours under one relation.
    pool = object_ids[:]
    rng.shuffle(pool)
    count = 0
    for index, nid in enumerate(pool):
        if count == n_per_category:
            break
        node = graph.nodes[nid]
        present_rels: list[str] = []
        for hit in graph.neighbors(nid):
            if hit.relation not in present_rels:
                present_rels.append(hit.relation)
        if not present_rels:
            continue
        relation = present_rels[index % len(present_rels)]
        title = node.attributes["name"]
        question = f"Who or what is {_rel_phrase(relation)} the {title}?"
        query = StructuredQuery(title, QueryKind.FIND_RELATED, relationship=relation)
        item = _question_item(graph, question, query, "C2")
        if item is not None:
            items.append(item)
            count += 1
    if count < n_per_category:
        log.warning("generated %d C2 items of %d requested", count, n_per_category)

    # C3: attribute of the neighbours.
    pool = object_ids[:]
    rng.shuffle(pool)
    count = 0
    for index, nid in enumerate(pool):
        if count == n_per_category:
            break
        node = graph.nodes[nid]
        pairs: list[tuple[str, str]] = []
        hits = graph.neighbors(nid)
        for relation in graph.relations:
            rel_neighbors = [h.node_id for h in hits if h.relation == relation]
            if not rel_neighbors:
                continue
            for key in attr_preference:
                if any(
                    key in graph.nodes[neighbor].attributes for neighbor in rel_neighbors
                ):
                    pairs.append((relation, key))
        if not pairs:
            continue
        relation, key = pairs[index % len(pairs)]
        title = node.attributes["name"]
        question = (
            f"What is the {_attr_words(key)} of {_rel_phrase(relation)} the {title}?"
        )
        query = StructuredQuery(
            title,
            QueryKind.ATTRIBUTE_OF_RELATED,
            relationship=relation,
            target_attribute=key,
        )
        item = _question_item(graph, question, query, "C3")
        if item is not None:
            items.append(item)
            count += 1
    if count < n_per_category:
        log.warning("generated %d C3 items of %d requested", count, n_per_category)

    return items


_GENERATION_SYSTEM = (
    "You write benchmark questions about museum collection records. Reply "
    "with a single JSON object with keys question, expected_answer and "
    "query_details, and nothing else."
)

_GENERATION_INSTRUCTIONS = {
    "C1": (
        "Write one question asking for a single attribute of this object. "
        'query_details must be {"object_title": <title>, "target_attribute": <key>}.'
    ),
    "C2": (
        "Write one question asking what is related to this object via one "
        'relationship. query_details must be {"object_title": <title>, '
        '"relationship": <relation>}.'
    ),
    "C3": (
        "Write one question asking for an attribute of an entity related to "
        'this object. query_details must be {"object_title": <title>, '
        '"relationship": <relation>, "target_attribute": <key>}.'
    ),
}

def _parse_json_object(reply: str) -> Mapping[str, Any] | None:
    try:
        parsed = json.loads(reply)
        return parsed if isinstance(parsed, Mapping) else None
    except json.JSONDecodeError:
        pass
    start = reply.find("{")
    end = reply.rfind("}")
    if start == -1 or end <= start:
        return None
    try:
        parsed = json.loads(reply[start : end + 1])
    except json.JSONDecodeError:
        return None
    return parsed if isinstance(parsed, Mapping) else None


def _generate_llm(
    records: Sequence[Record],
    n_per_category: int,
    provider: ModelProvider,
    seed: int,
) -> list[QAItem]:
    rng = random.Random(seed)
    items: list[QAItem] = []
    for category in CATEGORIES:
        pool = list(records)
        rng.shuffle(pool)
        count = 0
        discarded = 0
        for record in pool:
            if count == n_per_category:
                break
            prompt = (
                f"Category {category}. {_GENERATION_INSTRUCTIONS[category]}\n\n"
                f"Record:\n{json.dumps(record_to_json(record), ensure_ascii=False, indent=2)}"
            )
            try:
                reply = provider.complete(ChatRequest(_GENERATION_SYSTEM, prompt))
            except ProviderError as exc:
                log.warning("generation call failed: %s", exc)
                discarded += 1
                continue
            payload = _parse_json_object(reply)
            if payload is None:
                discarded += 1
                continue
            try:
                item = _validate_item({**payload, "category": category})
            except (ValueError, InvalidQueryError):
                discarded += 1
                continue
            items.append(item)
            count += 1
        if discarded:
            log.warning("discarded %d malformed %s generations", discarded, category)
        if count < n_per_category:
            log.warning("generated %d %s items of %d requested", count, category, n_per_category)
    return items


def generate_qa(
    graph: KnowledgeGraph,
    records: Sequence[Record] | None = None,
    n_per_category: int = 50,
    provider: ModelProvider | None = None,
    seed: int = 0,
) -> list[QAItem]:
    """Produce benchmark items, n per category.

    Without a provider, deterministic templates over the graph are used and
    every expected answer is computed from the item's own structured query,
    so the structured system scores the result perfectly by construction.
    With a provider, questions are drafted by the model from the raw records
    and malformed replies are discarded.
    """
    if provider is None:
        return _generate_template(graph, n_per_category, seed)
    if records is None:
        raise ValueError("provider-backed generation requires the raw records")
    return _generate_llm(records, n_per_category, provider, seed)


def save_qa(items: Iterable[QAItem], sink: str | Path | IO[str]) -> None:
    """Write items as NDJSON, one object per line."""
    text = "".join(json.dumps(item.to_dict(), ensure_ascii=False) + "\n" for item in items)
    if hasattr(sink, "write"):
        sink.write(text)  # type: ignore[union-attr]
    else:
        Path(sink).write_text(text, encoding="utf-8")  # type: ignore[arg-type]
