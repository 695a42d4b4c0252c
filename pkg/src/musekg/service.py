"""HTTP service exposing a frozen graph for querying.

The graph is loaded once at startup and never mutated while serving, so
every handler is a pure read and concurrent requests need no locking.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .graph import KnowledgeGraph, MissingNodeError, VocabularyError, load_graph
from .nlq import ModelProvider, ProviderError, answer_question, get_provider
from .query import (
    AmbiguousAnchorError,
    AnchorNotFoundError,
    InvalidQueryError,
    StructuredQuery,
    execute,
)

log = logging.getLogger(__name__)

DEFAULT_NEIGHBOR_LIMIT = 100


@dataclass
class ServiceConfig:
    graph_path: str | Path
    host: str = "127.0.0.1"
    port: int = 8000
    provider: str = "mock"
    context_budget: int = 4000
    cors_origins: Sequence[str] = field(default_factory=tuple)
    console_dir: str | Path | None = None


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str) -> None:
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


class StructuredQueryBody(BaseModel):
    object_title: str
    relationship: str | None = None
    target_attribute: str | None = None


class QuestionBody(BaseModel):
    question: str


def _node_payload(graph: KnowledgeGraph, node_id: str) -> dict[str, Any]:
    node = graph.nodes[node_id]
    return {
        "id": node.node_id,
        "type": node.node_type.value,
        "attrs": node.attributes,
        "canonical": node.canonical,
    }


def create_app(
    graph: KnowledgeGraph,
    provider: ModelProvider,
    *,
    context_budget: int = 4000,
    cors_origins: Sequence[str] = (),
    console_dir: str | Path | None = None,
) -> FastAPI:
    """Build the application around an already-loaded graph."""
    graph.freeze()
    app = FastAPI(title="musekg", docs_url=None, redoc_url=None)

    if cors_origins:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=list(cors_origins),
            allow_methods=["*"],
            allow_headers=["*"],
        )

    @app.exception_handler(ApiError)
    async def _api_error(_request: Request, exc: ApiError) -> JSONResponse:
        return JSONResponse(
            status_code=exc.status,
            content={"error": {"code": exc.code, "message": exc.message}},
        )

    @app.get("/health")
    def health() -> dict[str, str]:
        return {"status": "ok"}

    @app.get("/stats")
    def stats() -> dict[str, Any]:
        return {
            "nodes": len(graph.nodes),
            "edges": len(graph.edges),
            "nodes_by_type": graph.node_counts_by_type(),
            "edges_by_relation": graph.edge_counts_by_relation(),
            "schema": list(graph.schema.keys),
            "relations": list(graph.relations),
        }

    @app.get("/nodes/{node_id}")
    def get_node(node_id: str) -> dict[str, Any]:
        if node_id not in graph.nodes:
            raise ApiError(404, "not_found", f"no node {node_id!r}")
        return _node_payload(graph, node_id)

    @app.get("/nodes/{node_id}/neighbors")
    def get_neighbors(
        node_id: str, limit: int = DEFAULT_NEIGHBOR_LIMIT, offset: int = 0
    ) -> dict[str, Any]:
        if limit < 1 or offset < 0:
            raise ApiError(422, "bad_request", "limit must be >= 1 and offset >= 0")
        try:
            hits = graph.neighbors(node_id)
        except MissingNodeError as exc:
            raise ApiError(404, "not_found", str(exc))
        window = hits[offset : offset + limit]
        return {
            "node_id": node_id,
            "total": len(hits),
            "limit": limit,
            "offset": offset,
            "neighbors": [
                {
                    "relation": hit.relation,
                    "direction": hit.direction,
                    "node_id": hit.node_id,
                    "title": graph.nodes[hit.node_id].title(),
                }
                for hit in window
            ],
        }

    @app.get("/search")
    def search(title: str = "") -> dict[str, Any]:
        if not title.strip():
            raise ApiError(422, "bad_request", "title parameter is required")
        matches = sorted(graph.find_by_title(title))
        return {
            "title": title,
            "matches": [
                {
                    "id": node_id,
                    "type": graph.nodes[node_id].node_type.value,
                    "title": graph.nodes[node_id].title(),
                }
                for node_id in matches
            ],
        }

    @app.post("/structured-query")
    def structured_query(body: StructuredQueryBody) -> dict[str, Any]:
        try:
            query = StructuredQuery.from_wire(body.model_dump())
            result = execute(graph, query)
        except InvalidQueryError as exc:
            raise ApiError(422, "bad_request", str(exc))
        except VocabularyError as exc:
            raise ApiError(422, "vocabulary", str(exc))
        except AnchorNotFoundError as exc:
            raise ApiError(404, "not_found", str(exc))
        except AmbiguousAnchorError as exc:
            raise ApiError(409, "ambiguous", str(exc))
        return {"kind": query.kind.value, **result.to_dict()}

    @app.post("/query")
    def query(body: QuestionBody) -> dict[str, Any]:
        if not body.question.strip():
            raise ApiError(422, "bad_request", "question must be non-empty")
        try:
            answer = answer_question(
                body.question, graph, provider, context_budget=context_budget
            )
        except ProviderError as exc:
            raise ApiError(502, "provider_error", str(exc))
        return answer.to_dict()

    if console_dir is not None:
        app.mount("/", StaticFiles(directory=str(console_dir), html=True), name="console")

    return app


def load_app(config: ServiceConfig) -> FastAPI:
    """Load the graph from disk and build the application."""
    graph = load_graph(config.graph_path)
    provider = get_provider(config.provider)
    log.info(
        "serving %d nodes / %d edges with provider %s",
        len(graph.nodes),
        len(graph.edges),
        provider.identity,
    )
    return create_app(
        graph,
        provider,
        context_budget=config.context_budget,
        cors_origins=config.cors_origins,
        console_dir=config.console_dir,
    )


def serve(config: ServiceConfig) -> None:
    """Run the service until interrupted; uvicorn handles signals."""
    import uvicorn

    uvicorn.run(load_app(config), host=config.host, port=config.port, log_level="info")
