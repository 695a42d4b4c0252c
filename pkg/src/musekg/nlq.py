"""Natural-language question answering grounded in the knowledge graph.

Pipeline: extract entity mentions from the question, resolve the first one
to an anchor node, retrieve its context block, then ask a model provider to
synthesise the final answer from that context alone. Providers are
pluggable; the deterministic mock provider makes the whole pipeline runnable
offline and testable.
"""

from __future__ import annotations

import json
import logging
import os
import re
import time
from dataclasses import dataclass
from typing import Any, Protocol

import httpx

from .errors import MuseKGError
from .graph import KnowledgeGraph
from .ingest import normalize_text
from .query import (
    AmbiguousAnchorError,
    AnchorNotFoundError,
    resolve_anchor,
    retrieve_context,
)

log = logging.getLogger(__name__)

EXTRACTION_SYSTEM_PROMPT = (
    "Extract the museum object titles or entity names mentioned in the "
    "question. Reply with a JSON array of strings and nothing else."
)

SYNTHESIS_PROMPT_TEMPLATE = (
    "Answer using ONLY the KG context. Return ONLY the final answer.\n"
    "Context: {context}\nQuestion: {question}\nAnswer:"
)

NOT_FOUND_ANSWER = "entity not found"

_CANDIDATE_HEADER = "Candidate titles:"
_ARRAY_RE = re.compile(r"\[[^\]]*\]", re.S)

ENV_ENDPOINT = "MUSEKG_LLM_ENDPOINT"
ENV_API_KEY = "MUSEKG_LLM_API_KEY"
ENV_MODEL = "MUSEKG_LLM_MODEL"


class NoEntityError(MuseKGError):
    """Neither the provider nor the fallback matcher found an entity."""


class ProviderError(MuseKGError):
    """Base class for model provider failures."""


class ProviderAuthError(ProviderError):
    pass


class ProviderQuotaError(ProviderError):
    pass


class ProviderTimeoutError(ProviderError):
    pass


class ProviderTransportError(ProviderError):
    pass


@dataclass
class ChatRequest:
    system: str
    user: str
    temperature: float = 0.0
    max_output_tokens: int = 512

    def __post_init__(self) -> None:
        if not self.user:
            raise ValueError("user text must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be within [0, 2]")


class ModelProvider(Protocol):
    identity: str

    def complete(self, request: ChatRequest) -> str: ...


@dataclass
class NLAnswer:
    question: str
    entities: list[str]
    anchor: str | None
    context: str
    answer: str
    timings: dict[str, float]

    def to_dict(self) -> dict[str, Any]:
        return {
            "question": self.question,
            "entities": self.entities,
            "anchor": self.anchor,
            "context": self.context,
            "answer": self.answer,
            "timings": self.timings,
        }


def _padded(text: str) -> str:
    return f" {text} "


def _contains_title(question_norm: str, title_norm: str) -> bool:
    return _padded(title_norm) in _padded(question_norm)


def _display_titles(graph: KnowledgeGraph) -> list[tuple[str, str]]:
    """(normalised title, display title) pairs, one per distinct title."""
    pairs: list[tuple[str, str]] = []
    for norm, node_ids in graph.title_index.items():
        display = graph.nodes[min(node_ids)].attributes.get("name", norm)
        pairs.append((norm, display))
    return pairs


def _candidate_titles(graph: KnowledgeGraph, question: str, limit: int = 50) -> list[str]:
    """Graph titles ranked by overlap with the question, best first."""
    question_norm = normalize_text(question)
    question_tokens = set(question_norm.split())

    def sort_key(pair: tuple[str, str]) -> tuple[int, int, str]:
        norm, _display = pair
        if _contains_title(question_norm, norm):
            return (0, -len(norm), norm)
        overlap = len(question_tokens.intersection(norm.split()))
        return (1, -overlap, norm)

    ranked = sorted(_display_titles(graph), key=sort_key)
    return [display for _norm, display in ranked[:limit]]


def _fallback_matches(graph: KnowledgeGraph, question: str) -> list[str]:
    """Titles appearing verbatim (normalised) in the question, longest first."""
    question_norm = normalize_text(question)
    found = [
        (norm, display)
        for norm, display in _display_titles(graph)
        if norm and _contains_title(question_norm, norm)
    ]
    found.sort(key=lambda pair: (-len(pair[0]), pair[0]))
    return [display for _norm, display in found]


def _parse_string_array(reply: str) -> list[str]:
    try:
        parsed = json.loads(reply)
    except json.JSONDecodeError:
        match = _ARRAY_RE.search(reply)
        if match is None:
            return []
        try:
            parsed = json.loads(match.group(0))
        except json.JSONDecodeError:
            return []
    if not isinstance(parsed, list):
        return []
    return [item for item in parsed if isinstance(item, str) and item.strip()]


def extract_entities(
    question: str, graph: KnowledgeGraph, provider: ModelProvider
) -> list[str]:
    """Entity mentions in the question, most specific first.

    The provider sees the question plus candidate graph titles. If its reply
    cannot be parsed (or transport fails) a deterministic longest-substring
    matcher over the title index takes over.
    """
    if not question.strip():
        raise ValueError("question must be non-empty")
    candidates = _candidate_titles(graph, question)
    user = question
    if candidates:
        lines = "\n".join(f"- {title}" for title in candidates)
        user = f"{question}\n\n{_CANDIDATE_HEADER}\n{lines}"
    entities: list[str] = []
    try:
        reply = provider.complete(ChatRequest(EXTRACTION_SYSTEM_PROMPT, user))
        entities = _parse_string_array(reply)
    except ProviderError as exc:
        log.warning("extraction provider failed (%s); using fallback matcher", exc)
    if not entities:
        entities = _fallback_matches(graph, question)
    if not entities:
        raise NoEntityError(f"no entity recognised in {question!r}")
    return entities


def build_synthesis_prompt(context: str, question: str) -> str:
    """Fill the synthesis template byte-for-byte (no str.format, so braces in
    the context cannot corrupt it)."""
    return SYNTHESIS_PROMPT_TEMPLATE.replace("{context}", context).replace(
        "{question}", question
    )


def answer_question(
    question: str,
    graph: KnowledgeGraph,
    provider: ModelProvider,
    *,
    context_budget: int = 4000,
) -> NLAnswer:
    """Full question-answering pipeline; degrades to ``entity not found``
    when no anchor can be resolved."""
    start = time.perf_counter()
    timings = {"extraction_ms": 0.0, "retrieval_ms": 0.0, "synthesis_ms": 0.0}

    t0 = time.perf_counter()
    entities: list[str] = []
    anchor: str | None = None
    try:
        entities = extract_entities(question, graph, provider)
    except NoEntityError:
        pass
    timings["extraction_ms"] = (time.perf_counter() - t0) * 1000.0

    context_text = ""
    answer = NOT_FOUND_ANSWER
    if entities:
        t0 = time.perf_counter()
        try:
            anchor = resolve_anchor(graph, entities[0])
            context_text = retrieve_context(graph, anchor, context_budget).text
        except (AnchorNotFoundError, AmbiguousAnchorError):
            anchor = None
        timings["retrieval_ms"] = (time.perf_counter() - t0) * 1000.0

    if anchor is not None:
        t0 = time.perf_counter()
        prompt = build_synthesis_prompt(context_text, question)
        answer = provider.complete(ChatRequest("", prompt))
        timings["synthesis_ms"] = (time.perf_counter() - t0) * 1000.0

    timings["total_ms"] = (time.perf_counter() - start) * 1000.0
    return NLAnswer(question, entities, anchor, context_text, answer, timings)


class MockProvider:
    """Deterministic offline provider.

    Extraction requests return the candidate titles that appear verbatim in
    the question. Synthesis requests return the value of the context line
    whose key tokens best overlap the question tokens (ties favour earlier
    lines), else the first attribute line's value.
    """

    identity = "mock"

    def complete(self, request: ChatRequest) -> str:
        if request.system == EXTRACTION_SYSTEM_PROMPT:
            return self._extract(request.user)
        return self._synthesize(request.user)

    def _extract(self, user: str) -> str:
        if _CANDIDATE_HEADER not in user:
            return "[]"
        question, _header, tail = user.partition(_CANDIDATE_HEADER)
        question_norm = normalize_text(question)
        found: list[tuple[int, str]] = []
        for line in tail.splitlines():
            line = line.strip()
            if not line.startswith("- "):
                continue
            title = line[2:].strip()
            norm = normalize_text(title)
            if norm and _contains_title(question_norm, norm):
                found.append((-len(norm), title))
        found.sort(key=lambda pair: pair[0])
        return json.dumps([title for _key, title in found])

    @staticmethod
    def _context_lines(context: str) -> list[tuple[str, str, bool]]:
        """(key, value, is_attribute_line) per parseable context line."""
        parsed: list[tuple[str, str, bool]] = []
        for line in context.splitlines()[1:]:
            if not line.startswith("- "):
                continue
            body = line[2:]
            out_pos = body.find(" -> ")
            in_pos = body.find(" <- ")
            positions = [p for p in (out_pos, in_pos) if p != -1]
            if positions:
                split = min(positions)
                parsed.append((body[:split], body[split + 4 :], False))
            elif ": " in body:
                key, value = body.split(": ", 1)
                parsed.append((key, value, True))
        return parsed

    def _synthesize(self, user: str) -> str:
        answer_pos = user.rfind("\nQuestion: ")
        if answer_pos == -1 or not user.startswith("Answer using ONLY the KG context."):
            return ""
        end = user.rfind("\nAnswer:")
        if end == -1:
            return ""
        context_start = user.find("Context: ")
        context = user[context_start + len("Context: ") : answer_pos]
        question = user[answer_pos + len("\nQuestion: ") : end]
        question_tokens = set(normalize_text(question).split())

        best_value: str | None = None
        best_score = 0
        first_attribute: str | None = None
        for key, value, is_attribute in self._context_lines(context):
            if is_attribute and first_attribute is None:
                first_attribute = value
            score = len(question_tokens.intersection(normalize_text(key).split()))
            if score > best_score:
                best_score = score
                best_value = value
        if best_value is not None:
            return best_value
        return first_attribute if first_attribute is not None else ""


class HttpProvider:
    """Chat-completions provider over HTTP with bounded retries."""

    def __init__(
        self,
        endpoint: str,
        api_key: str | None = None,
        model: str = "",
        *,
        timeout: float = 30.0,
        retries: int = 2,
        backoff: float = 0.5,
    ) -> None:
        if not endpoint:
            raise ValueError("endpoint must be non-empty")
        self.endpoint = endpoint
        self.api_key = api_key
        self.model = model
        self.retries = retries
        self.backoff = backoff
        self.identity = f"http:{model or 'default'}"
        self._client = httpx.Client(timeout=timeout)

    @classmethod
    def from_env(cls, **kwargs: Any) -> "HttpProvider":
        endpoint = os.environ.get(ENV_ENDPOINT)
        if not endpoint:
            raise ProviderError(f"{ENV_ENDPOINT} is not set")
        return cls(
            endpoint,
            api_key=os.environ.get(ENV_API_KEY),
            model=os.environ.get(ENV_MODEL, ""),
            **kwargs,
        )

    def _payload(self, request: ChatRequest) -> dict[str, Any]:
        messages = []
        if request.system:
            messages.append({"role": "system", "content": request.system})
        messages.append({"role": "user", "content": request.user})
        return {
            "model": self.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }

    def complete(self, request: ChatRequest) -> str:
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = self._payload(request)
        last_error: ProviderError | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff * (2 ** (attempt - 1)))
            try:
                response = self._client.post(self.endpoint, json=payload, headers=headers)
            except httpx.TimeoutException as exc:
                last_error = ProviderTimeoutError(f"timeout calling {self.endpoint}")
                log.warning("provider timeout (attempt %d): %s", attempt + 1, exc)
                continue
            except httpx.HTTPError as exc:
                last_error = ProviderTransportError(str(exc))
                log.warning("provider transport error (attempt %d): %s", attempt + 1, exc)
                continue
            if response.status_code in (401, 403):
                raise ProviderAuthError(f"authentication failed ({response.status_code})")
            if response.status_code == 429:
                last_error = ProviderQuotaError("rate limited (429)")
                continue
            if response.status_code >= 500:
                last_error = ProviderTransportError(f"server error ({response.status_code})")
                continue
            if response.status_code != 200:
                raise ProviderTransportError(f"unexpected status {response.status_code}")
            try:
                body = response.json()
                content = body["choices"][0]["message"]["content"]
            except (ValueError, LookupError, TypeError) as exc:
                raise ProviderTransportError("malformed provider response") from exc
            if not isinstance(content, str):
                raise ProviderTransportError("provider returned non-text content")
            return content
        assert last_error is not None
        raise last_error


def get_provider(name: str, **kwargs: Any) -> ModelProvider:
    """Factory for the CLI/service: ``mock`` or ``http``."""
    if name == "mock":
        return MockProvider()
    if name == "http":
        return HttpProvider.from_env(**kwargs)
    raise ValueError(f"unknown provider {name!r}")
