import contextlib
import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from musekg.graph import KnowledgeGraph, Node, NodeType
from musekg.nlq import (
    EXTRACTION_SYSTEM_PROMPT,
    NOT_FOUND_ANSWER,
    SYNTHESIS_PROMPT_TEMPLATE,
    ChatRequest,
    HttpProvider,
    MockProvider,
    NoEntityError,
    ProviderAuthError,
    ProviderError,
    ProviderQuotaError,
    ProviderTimeoutError,
    ProviderTransportError,
    answer_question,
    build_synthesis_prompt,
    extract_entities,
    get_provider,
)
from musekg.query import retrieve_context


class ScriptedProvider:
    """Returns canned replies in order; raises whatever is scripted."""

    identity = "scripted"

    def __init__(self, replies):
        self.replies = list(replies)
        self.requests = []

    def complete(self, request):
        self.requests.append(request)
        reply = self.replies.pop(0)
        if isinstance(reply, Exception):
            raise reply
        return reply


def test_chat_request_validation():
    with pytest.raises(ValueError):
        ChatRequest("sys", "")
    with pytest.raises(ValueError):
        ChatRequest("sys", "hi", temperature=3.0)
    assert ChatRequest("sys", "hi").max_output_tokens == 512


def test_build_synthesis_prompt_verbatim():
    prompt = build_synthesis_prompt("CTX {braces}", "Q?")
    assert prompt == (
        "Answer using ONLY the KG context. Return ONLY the final answer.\n"
        "Context: CTX {braces}\nQuestion: Q?\nAnswer:"
    )
    assert "{context}" in SYNTHESIS_PROMPT_TEMPLATE
    assert "{question}" in SYNTHESIS_PROMPT_TEMPLATE


class TestMockExtraction:
    def ask(self, question, candidates):
        user = question + "\n\nCandidate titles:\n" + "\n".join(f"- {c}" for c in candidates)
        reply = MockProvider().complete(ChatRequest(EXTRACTION_SYSTEM_PROMPT, user))
        return json.loads(reply)

    def test_verbatim_candidates_longest_first(self):
        got = self.ask(
            "What are the measurements for the Long Scale Galvanometer?",
            ["Galvanometer", "Long Scale Galvanometer", "Testimonial of Merit"],
        )
        assert got == ["Long Scale Galvanometer", "Galvanometer"]

    def test_token_boundaries_respected(self):
        got = self.ask(
            "Where is the saxophone kept?",
            ["saxophone", "axophone", "the saxophone kept"],
        )
        assert got == ["the saxophone kept", "saxophone"]

    def test_no_candidate_header(self):
        reply = MockProvider().complete(ChatRequest(EXTRACTION_SYSTEM_PROMPT, "plain question"))
        assert json.loads(reply) == []


class TestMockSynthesis:
    def answer(self, context, question):
        prompt = build_synthesis_prompt(context, question)
        return MockProvider().complete(ChatRequest("", prompt))

    def test_golden_measurements(self, obj123_full_graph):
        context = retrieve_context(obj123_full_graph, "object:OBJ123").text
        got = self.answer(context, "What are the measurements for the Long Scale Galvanometer?")
        assert got == "14.0 x 29.0 x 22.0 cm"

    def test_golden_accession(self, obj123_full_graph):
        context = retrieve_context(obj123_full_graph, "object:OBJ123").text
        got = self.answer(
            context, "What is the accession number of the Long Scale Galvanometer?"
        )
        assert got == "MHM2013.432"

    def test_golden_producer_relation_line(self, obj123_full_graph):
        context = retrieve_context(obj123_full_graph, "object:OBJ123").text
        got = self.answer(
            context, "Who or what is the primary producer of the Long Scale Galvanometer?"
        )
        assert got == "Walden Precision Apparatus Limited"

    def test_golden_c3_neighbor_attribute(self, certificate_graph):
        context = retrieve_context(certificate_graph, "object:OBJ900").text
        got = self.answer(
            context,
            "What is the accession number of the entity associated with the Certificate"
            " of Passing First Year of Bachelor of Laws?",
        )
        assert got == "MHM06682"

    def test_tie_favours_earlier_line(self):
        context = "Object: T\n- material_desc: first value\n- description: second value"
        got = self.answer(context, "What is the material description of the T?")
        assert got == "first value"

    def test_zero_overlap_falls_back_to_first_attribute(self, obj123_full_graph):
        context = retrieve_context(obj123_full_graph, "object:OBJ123").text
        assert self.answer(context, "Hmm?") == "Long Scale Galvanometer"

    def test_empty_context(self):
        assert self.answer("Object: T", "What is anything?") == ""

    def test_non_template_input(self):
        assert MockProvider().complete(ChatRequest("", "free-form text")) == ""


class TestExtractEntities:
    def test_provider_reply_used(self, obj123_graph):
        provider = ScriptedProvider(['["Long Scale Galvanometer"]'])
        got = extract_entities("any question", obj123_graph, provider)
        assert got == ["Long Scale Galvanometer"]
        # candidate titles ride along in the user message
        assert "Candidate titles:" in provider.requests[0].user

    def test_prose_wrapped_array_parsed(self, obj123_graph):
        provider = ScriptedProvider(['Sure thing: ["Long Scale Galvanometer"] hope it helps'])
        got = extract_entities("q", obj123_graph, provider)
        assert got == ["Long Scale Galvanometer"]

    def test_unparseable_reply_falls_back(self, obj123_graph):
        provider = ScriptedProvider(["no brackets here"])
        got = extract_entities(
            "Tell me about the Long Scale Galvanometer", obj123_graph, provider
        )
        assert got == ["Long Scale Galvanometer"]

    def test_provider_error_falls_back(self, obj123_graph):
        provider = ScriptedProvider([ProviderTransportError("down")])
        got = extract_entities(
            "Tell me about the Long Scale Galvanometer", obj123_graph, provider
        )
        assert got == ["Long Scale Galvanometer"]

    def test_nothing_found(self, obj123_graph):
        with pytest.raises(NoEntityError):
            extract_entities("completely unrelated", obj123_graph, ScriptedProvider(["[]"]))

    def test_empty_question(self, obj123_graph):
        with pytest.raises(ValueError):
            extract_entities("   ", obj123_graph, MockProvider())


class TestAnswerQuestion:
    def test_end_to_end_measurements(self, obj123_full_graph):
        answer = answer_question(
            "What are the measurements for the Long Scale Galvanometer?",
            obj123_full_graph,
            MockProvider(),
        )
        assert answer.answer == "14.0 x 29.0 x 22.0 cm"
        assert answer.anchor == "object:OBJ123"
        assert answer.entities[0] == "Long Scale Galvanometer"
        assert answer.answer in answer.context

    def test_timings_present(self, obj123_full_graph):
        answer = answer_question(
            "What are the measurements for the Long Scale Galvanometer?",
            obj123_full_graph,
            MockProvider(),
        )
        for stage in ("extraction_ms", "retrieval_ms", "synthesis_ms", "total_ms"):
            assert answer.timings[stage] >= 0.0
        assert answer.timings["total_ms"] >= max(
            answer.timings[s] for s in ("extraction_ms", "retrieval_ms", "synthesis_ms")
        )

    def test_unknown_entity_degrades(self, obj123_full_graph):
        answer = answer_question("What is a saxophone?", obj123_full_graph, MockProvider())
        assert answer.answer == NOT_FOUND_ANSWER
        assert answer.anchor is None
        assert answer.context == ""

    def test_ambiguous_anchor_degrades(self):
        g = KnowledgeGraph()
        g.add_node(Node("object:1", NodeType.OBJECT, {"name": "Blue Ceramic Cup"}))
        g.add_node(Node("object:2", NodeType.OBJECT, {"name": "Blue Copper Cup"}))
        provider = ScriptedProvider(['["Blue Cup"]'])
        answer = answer_question("Describe the Blue Cup", g, provider)
        assert answer.answer == NOT_FOUND_ANSWER
        assert answer.anchor is None

    def test_to_dict_shape(self, obj123_full_graph):
        payload = answer_question(
            "What are the measurements for the Long Scale Galvanometer?",
            obj123_full_graph,
            MockProvider(),
        ).to_dict()
        assert set(payload) == {
            "question",
            "entities",
            "anchor",
            "context",
            "answer",
            "timings",
        }


# -- HttpProvider against a local stub server --------------------------------


class _StubHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length)
        server = self.server
        step = server.script[min(server.calls, len(server.script) - 1)]
        server.calls += 1
        server.requests.append(
            {"body": json.loads(raw), "auth": self.headers.get("Authorization")}
        )
        status, payload, delay = step
        if delay:
            time.sleep(delay)
        data = json.dumps(payload).encode("utf-8")
        with contextlib.suppress(OSError):
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

    def log_message(self, *args):
        pass


@contextlib.contextmanager
def stub_server(script):
    server = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
    server.script = script
    server.calls = 0
    server.requests = []
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield server, f"http://127.0.0.1:{server.server_port}/v1/chat/completions"
    finally:
        server.shutdown()
        thread.join(timeout=2)


def chat_ok(content):
    return {"choices": [{"message": {"content": content}}]}


class TestHttpProvider:
    def test_success_and_payload_shape(self):
        with stub_server([(200, chat_ok("fine answer"), 0)]) as (server, url):
            provider = HttpProvider(url, api_key="secret-key", model="test-model")
            got = provider.complete(ChatRequest("sys prompt", "user text"))
        assert got == "fine answer"
        assert server.calls == 1
        sent = server.requests[0]
        assert sent["auth"] == "Bearer secret-key"
        assert sent["body"]["model"] == "test-model"
        assert sent["body"]["temperature"] == 0.0
        assert sent["body"]["max_tokens"] == 512
        assert sent["body"]["messages"] == [
            {"role": "system", "content": "sys prompt"},
            {"role": "user", "content": "user text"},
        ]

    def test_no_system_message_when_empty(self):
        with stub_server([(200, chat_ok("x"), 0)]) as (server, url):
            HttpProvider(url).complete(ChatRequest("", "user text"))
        assert server.requests[0]["body"]["messages"] == [
            {"role": "user", "content": "user text"}
        ]
        assert server.requests[0]["auth"] is None

    def test_auth_failure_does_not_retry(self):
        with stub_server([(401, {"error": "nope"}, 0)]) as (server, url):
            provider = HttpProvider(url, retries=2, backoff=0.001)
            with pytest.raises(ProviderAuthError):
                provider.complete(ChatRequest("", "hi"))
        assert server.calls == 1

    def test_server_errors_retry_then_succeed(self):
        script = [(500, {}, 0), (503, {}, 0), (200, chat_ok("eventually"), 0)]
        with stub_server(script) as (server, url):
            provider = HttpProvider(url, retries=2, backoff=0.001)
            assert provider.complete(ChatRequest("", "hi")) == "eventually"
        assert server.calls == 3

    def test_exhausted_retries_raise_transport_error(self):
        with stub_server([(500, {}, 0)]) as (server, url):
            provider = HttpProvider(url, retries=2, backoff=0.001)
            with pytest.raises(ProviderTransportError):
                provider.complete(ChatRequest("", "hi"))
        assert server.calls == 3

    def test_rate_limit_maps_to_quota_error(self):
        with stub_server([(429, {}, 0)]) as (server, url):
            provider = HttpProvider(url, retries=1, backoff=0.001)
            with pytest.raises(ProviderQuotaError):
                provider.complete(ChatRequest("", "hi"))
        assert server.calls == 2

    def test_timeout(self):
        with stub_server([(200, chat_ok("late"), 0.5)]) as (_server, url):
            provider = HttpProvider(url, timeout=0.05, retries=0)
            with pytest.raises(ProviderTimeoutError):
                provider.complete(ChatRequest("", "hi"))

    def test_malformed_body(self):
        with stub_server([(200, {"unexpected": True}, 0)]) as (server, url):
            provider = HttpProvider(url, retries=2, backoff=0.001)
            with pytest.raises(ProviderTransportError):
                provider.complete(ChatRequest("", "hi"))
        assert server.calls == 1

    def test_connection_refused_is_transport_error(self):
        provider = HttpProvider("http://127.0.0.1:9/nope", retries=0)
        with pytest.raises(ProviderTransportError):
            provider.complete(ChatRequest("", "hi"))

    def test_from_env(self, monkeypatch):
        monkeypatch.setenv("MUSEKG_LLM_ENDPOINT", "http://example.test/v1")
        monkeypatch.setenv("MUSEKG_LLM_API_KEY", "k")
        monkeypatch.setenv("MUSEKG_LLM_MODEL", "m")
        provider = HttpProvider.from_env()
        assert provider.endpoint == "http://example.test/v1"
        assert provider.api_key == "k"
        assert provider.identity == "http:m"

    def test_from_env_requires_endpoint(self, monkeypatch):
        monkeypatch.delenv("MUSEKG_LLM_ENDPOINT", raising=False)
        with pytest.raises(ProviderError):
            HttpProvider.from_env()

    def test_empty_endpoint_rejected(self):
        with pytest.raises(ValueError):
            HttpProvider("")


def test_get_provider_factory():
    assert isinstance(get_provider("mock"), MockProvider)
    with pytest.raises(ValueError):
        get_provider("carrier-pigeon")
