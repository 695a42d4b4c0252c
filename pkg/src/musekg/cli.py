"""Command-line entry points: build, query, serve, bench, generate-qa."""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from .bench import generate_qa, load_qa, run_benchmark, save_qa
from .builder import GazetteerLinker, RelationMapping, build_graph
from .errors import MuseKGError
from .graph import load_graph, save_graph
from .ingest import parse_records
from .nlq import answer_question, get_provider
from .query import (
    AmbiguousAnchorError,
    AnchorNotFoundError,
    StructuredQuery,
    execute,
)
from .service import ServiceConfig, serve


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool) -> None:
    """Build, query and benchmark museum knowledge graphs."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.command("build")
@click.option("--records", "records_path", required=True, type=click.Path(exists=True))
@click.option("--mapping", "mapping_path", type=click.Path(exists=True))
@click.option("--gazetteer", "gazetteer_path", type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--report", "report_path", type=click.Path())
def cli_build(
    records_path: str,
    mapping_path: str | None,
    gazetteer_path: str | None,
    out_path: str,
    report_path: str | None,
) -> None:
    """Build a graph from a records file and write it as NDJSON.

    Exits 0 on a clean build, 2 when some entries were rejected, 1 on a
    fatal error.
    """
    try:
        records, rejects = parse_records(Path(records_path).read_bytes())
        mapping = RelationMapping.from_file(mapping_path) if mapping_path else None
        linker = GazetteerLinker.from_file(gazetteer_path) if gazetteer_path else None
        graph, report = build_graph(records, mapping=mapping, linker=linker)
        save_graph(graph, out_path)
    except (MuseKGError, OSError, ValueError) as exc:
        raise click.ClickException(str(exc))

    payload = report.to_dict()
    payload["parse_rejects"] = [r.to_dict() for r in rejects]
    text = json.dumps(payload, ensure_ascii=False, indent=2)
    if report_path:
        Path(report_path).write_text(text + "\n", encoding="utf-8")
    click.echo(text)
    if rejects or report.rejects:
        sys.exit(2)


@main.command("query")
@click.argument("graph_path", type=click.Path(exists=True))
@click.option("--question", "question_text", help="Natural-language question.")
@click.option("--structured", "structured_json", help="Structured query as JSON.")
@click.option("--provider", "provider_name", default="mock", show_default=True,
              type=click.Choice(["mock", "http"]))
@click.option("--budget", default=4000, show_default=True, help="Context budget in characters.")
@click.option("--json", "as_json", is_flag=True, help="Print the full result as JSON.")
def cli_query(
    graph_path: str,
    question_text: str | None,
    structured_json: str | None,
    provider_name: str,
    budget: int,
    as_json: bool,
) -> None:
    """Answer one question against a saved graph."""
    if bool(question_text) == bool(structured_json):
        raise click.UsageError("provide exactly one of --question or --structured")
    try:
        graph = load_graph(graph_path)
    except MuseKGError as exc:
        raise click.ClickException(str(exc))

    if structured_json:
        try:
            query = StructuredQuery.from_wire(json.loads(structured_json))
            result = execute(graph, query)
        except json.JSONDecodeError as exc:
            raise click.ClickException(f"--structured is not valid JSON: {exc.msg}")
        except (AnchorNotFoundError, AmbiguousAnchorError) as exc:
            raise click.ClickException(str(exc))
        except MuseKGError as exc:
            raise click.ClickException(str(exc))
        if as_json:
            click.echo(json.dumps(result.to_dict(), ensure_ascii=False, indent=2))
        else:
            click.echo("; ".join(result.values))
        return

    try:
        provider = get_provider(provider_name)
        answer = answer_question(
            question_text or "", graph, provider, context_budget=budget
        )
    except MuseKGError as exc:
        raise click.ClickException(str(exc))
    if as_json:
        click.echo(json.dumps(answer.to_dict(), ensure_ascii=False, indent=2))
    else:
        click.echo(answer.answer)
    if answer.anchor is None:
        sys.exit(1)


@main.command("serve")
@click.option("--graph", "graph_path", required=True, type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--provider", "provider_name", default="mock", show_default=True,
              type=click.Choice(["mock", "http"]))
@click.option("--budget", default=4000, show_default=True)
@click.option("--cors-origin", "cors_origins", multiple=True,
              help="Allowed CORS origin (repeatable).")
@click.option("--console", "console_dir", type=click.Path(exists=True),
              help="Directory of console assets to serve at /.")
def cli_serve(
    graph_path: str,
    host: str,
    port: int,
    provider_name: str,
    budget: int,
    cors_origins: tuple[str, ...],
    console_dir: str | None,
) -> None:
    """Serve a saved graph over HTTP."""
    serve(
        ServiceConfig(
            graph_path=graph_path,
            host=host,
            port=port,
            provider=provider_name,
            context_budget=budget,
            cors_origins=cors_origins,
            console_dir=console_dir,
        )
    )


@main.command("bench")
@click.option("--graph", "graph_path", required=True, type=click.Path(exists=True))
@click.option("--qa", "qa_path", required=True, type=click.Path(exists=True))
@click.option("--system", default="structured", show_default=True,
              type=click.Choice(["structured", "nlq"]))
@click.option("--provider", "provider_name", default="mock", show_default=True,
              type=click.Choice(["mock", "http"]))
@click.option("--strict-gold", is_flag=True,
              help="Count unanswerable items as wrong instead of excluding them.")
@click.option("--budget", default=4000, show_default=True)
@click.option("--out", "out_path", type=click.Path(), help="Write the report JSON here.")
@click.option("--log", "log_path", type=click.Path(), help="Write per-item NDJSON here.")
def cli_bench(
    graph_path: str,
    qa_path: str,
    system: str,
    provider_name: str,
    strict_gold: bool,
    budget: int,
    out_path: str | None,
    log_path: str | None,
) -> None:
    """Score a QA file against a saved graph."""
    try:
        graph = load_graph(graph_path)
        items, rejects = load_qa(Path(qa_path))
        provider = get_provider(provider_name) if system == "nlq" else None
        report = run_benchmark(
            graph,
            items,
            system=system,
            provider=provider,
            strict_gold=strict_gold,
            context_budget=budget,
            log_path=log_path,
        )
    except (MuseKGError, ValueError) as exc:
        raise click.ClickException(str(exc))
    report.rejects = len(rejects)
    text = json.dumps(report.to_dict(), ensure_ascii=False, indent=2)
    if out_path:
        Path(out_path).write_text(text + "\n", encoding="utf-8")
    click.echo(text)


@main.command("generate-qa")
@click.option("--graph", "graph_path", required=True, type=click.Path(exists=True))
@click.option("--records", "records_path", type=click.Path(exists=True),
              help="Raw records (required for provider-backed generation).")
@click.option("-n", "--n-per-category", default=50, show_default=True)
@click.option("--provider", "provider_name",
              type=click.Choice(["mock", "http"]),
              help="Draft questions with a model instead of templates.")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def cli_generate_qa(
    graph_path: str,
    records_path: str | None,
    n_per_category: int,
    provider_name: str | None,
    seed: int,
    out_path: str,
) -> None:
    """Generate a QA benchmark file from a saved graph."""
    try:
        graph = load_graph(graph_path)
        records = None
        if records_path:
            records, _rejects = parse_records(Path(records_path).read_bytes())
        provider = get_provider(provider_name) if provider_name else None
        items = generate_qa(
            graph,
            records=records,
            n_per_category=n_per_category,
            provider=provider,
            seed=seed,
        )
        save_qa(items, out_path)
    except (MuseKGError, ValueError) as exc:
        raise click.ClickException(str(exc))
    click.echo(f"wrote {len(items)} items to {out_path}")


if __name__ == "__main__":
    main()
