from __future__ import annotations

import pathlib

import pytest

from musekg.builder import build_graph, default_relation_mapping
from musekg.ingest import parse_records

FIXTURES = pathlib.Path(__file__).parent / "fixtures"


def load_fixture_records(name: str):
    records, rejects = parse_records(FIXTURES.joinpath(name).read_text(encoding="utf-8"))
    assert rejects == []
    return records


def build_fixture_graph(name: str):
    graph, _report = build_graph(load_fixture_records(name), default_relation_mapping())
    return graph


@pytest.fixture(scope="session")
def obj123_records():
    return load_fixture_records("obj123.json")


@pytest.fixture(scope="session")
def obj123_graph():
    return build_fixture_graph("obj123.json")


@pytest.fixture(scope="session")
def obj123_full_graph():
    return build_fixture_graph("obj123_full.json")


@pytest.fixture(scope="session")
def certificate_graph():
    return build_fixture_graph("certificate.json")


@pytest.fixture
def fixture_dir():
    return FIXTURES
