"""Operator command line: one subcommand per pipeline stage.

Exit codes: 0 success, 1 stage failure, 2 usage error, 3 scoring
completed but with partial failures.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from . import pipeline as pl
from .corpus import CorpusError
from .harvest import HarvestError, ResolverClient
from .prompts import PromptPair, load_prompt_file
from .scorer import ScorerConfig

EXIT_PARTIAL = 3


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _require(out: Path, artifact: str, remedy: str) -> None:
    if not (out / artifact).exists():
        raise click.UsageError(f"no {artifact} in {out}; {remedy}")


@click.group()
@click.option(
    "--anonymize/--no-anonymize",
    default=True,
    show_default=True,
    help="Replace institutions and papers with neutral labels in exports.",
)
@click.pass_context
def main(ctx: click.Context, anonymize: bool) -> None:
    """Score submission pools, reverse-engineer grade boundaries, report."""
    ctx.obj = {"anonymize": anonymize}


@main.command()
@click.option("--results-sheet", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Published results sheet (CSV).")
@click.option("--uoa", required=True, help="Unit of assessment to ingest.")
@click.option("--out", required=True, type=click.Path(file_okay=False),
              help="Run directory receiving all artifacts.")
@click.option("--resolver-url", default="", help="Open-access resolver base URL.")
@click.option("--drop-in", type=click.Path(file_okay=False),
              help="Directory of hand-collected documents named <record_id>.<ext>.")
@click.option("--max-in-flight", default=4, show_default=True,
              help="Concurrent document downloads.")
def harvest(results_sheet, uoa, out, resolver_url, drop_in, max_in_flight):
    """Ingest a results sheet and collect open-access documents."""
    resolver = None
    if resolver_url:
        try:
            resolver = ResolverClient(base_url=resolver_url, cache_dir=Path(out) / "doi-cache")
        except HarvestError as exc:
            _fail(str(exc))
    try:
        sets, row_errors = pl.run_harvest(
            results_sheet, uoa, out,
            resolver=resolver, drop_in=drop_in, max_in_flight=max_in_flight,
        )
    except (CorpusError, HarvestError, pl.PipelineError) as exc:
        _fail(str(exc))
    for err in row_errors:
        click.echo(f"warning: {err}", err=True)
    if not sets:
        _fail(f"no usable rows for unit of assessment {uoa!r}")
    records = sum(len(s.records) for s in sets)
    available = sum(
        1 for s in sets for r in s.records if r.availability == "available"
    )
    click.echo(
        f"harvested {len(sets)} institution(s), {records} record(s), "
        f"{available} document(s) available"
    )


@main.command()
@click.option("--out", required=True, type=click.Path(exists=True, file_okay=False),
              help="Run directory with a harvested manifest.")
@click.option("--backend", type=click.Choice(["mock", "http"]), default="mock",
              show_default=True, help="Scoring backend.")
@click.option("--base-url", default="", help="Chat API base URL (http backend).")
@click.option("--model-id", default="mock-scorer", show_default=True,
              help="Model identifier recorded with the run.")
@click.option("--seed", default=0, show_default=True,
              help="Mock backend seed; reruns with the same seed are identical.")
@click.option("--samples", default=None, type=int,
              help="Samples per paper.  [default: 5]")
@click.option("--temperature", default=None, type=float,
              help="Sampling temperature.  [default: 0.2]")
@click.option("--prompts", "prompts_path", type=click.Path(exists=True, dir_okay=False),
              help="TOML file overriding the built-in prompt texts.")
@click.option("--min-words", default=500, show_default=True,
              help="Minimum extractable words per document.")
@click.option("--max-retries", default=3, show_default=True,
              help="Retries per malformed sample.")
@click.option("--max-in-flight", default=4, show_default=True,
              help="Concurrent scoring requests.")
@click.pass_context
def score(ctx, out, backend, base_url, model_id, seed, samples, temperature,
          prompts_path, min_words, max_retries, max_in_flight):
    """Score every available document; write results.csv plus audit trail."""
    out_dir = Path(out)
    _require(out_dir, pl.MANIFEST, "run `refpool harvest` first")
    prompts = PromptPair()
    overrides: dict = {}
    if prompts_path:
        try:
            prompts, overrides = load_prompt_file(prompts_path)
        except (ValueError, OSError) as exc:
            _fail(str(exc))
    # Explicit flags beat the prompt file's overrides, which beat defaults.
    if temperature is None:
        temperature = overrides.get("temperature", 0.2)
    if samples is None:
        samples = overrides.get("samples", 5)
    try:
        config = ScorerConfig(
            temperature=temperature,
            samples_per_paper=samples,
            max_retries=max_retries,
            max_in_flight=max_in_flight,
            model_id=model_id,
        )
        backend_impl = pl.make_backend(backend, seed=seed, base_url=base_url)
        result = pl.run_score(
            out_dir, config, backend_impl,
            prompts=prompts, backend_kind=backend, seed=seed,
            anonymize_export=ctx.obj["anonymize"], min_words=min_words,
        )
    except pl.PipelineError as exc:
        _fail(str(exc))
    click.echo(f"scored {result.scored} paper(s)")
    if result.partial:
        for failure in result.failed:
            click.echo(f"failed: {failure}", err=True)
        click.echo(f"{len(result.failed)} paper(s) failed; see {pl.RUN_META}", err=True)
        sys.exit(EXIT_PARTIAL)


@main.command()
@click.option("--out", required=True, type=click.Path(exists=True, file_okay=False),
              help="Run directory with results.csv.")
@click.option("--min-availability", default=0.9, show_default=True,
              help="Exclude institutions below this share of fetched documents.")
def calibrate(out, min_availability):
    """Reverse-engineer per-institution boundaries and aggregate them."""
    out_dir = Path(out)
    _require(out_dir, pl.RESULTS, "run `refpool score` first")
    try:
        stage = pl.run_calibrate(out_dir, min_availability=min_availability)
    except (pl.PipelineError, CorpusError, ValueError) as exc:
        _fail(str(exc))
    for inst in stage.institutions:
        if inst.eligibility.eligible:
            b = inst.boundaries
            click.echo(
                f"{inst.institution_id}: b12={b.b12.point:.2f} "
                f"b23={b.b23.point:.2f} b34={b.b34.point:.2f}"
            )
        else:
            click.echo(f"{inst.institution_id}: excluded ({inst.eligibility.reason})")
    if stage.overall is None:
        _fail("no eligible institutions; nothing to aggregate")
    o = stage.overall
    click.echo(
        f"overall: b12={o.b12.point:.2f} b23={o.b23.point:.2f} b34={o.b34.point:.2f} "
        f"({len(stage.institutions) - len(stage.excluded)} eligible, "
        f"{len(stage.excluded)} excluded)"
    )


@main.command()
@click.option("--out", required=True, type=click.Path(exists=True, file_okay=False),
              help="Run directory with results.csv.")
@click.option("--epsilon", default=2.0, show_default=True,
              help="Flag papers whose mean sits within this distance of a boundary.")
def analyze(out, epsilon):
    """Duplicate consistency, score variation, and borderline reports."""
    out_dir = Path(out)
    _require(out_dir, pl.RESULTS, "run `refpool score` first")
    try:
        stage = pl.run_analyze(out_dir, epsilon=epsilon)
    except (pl.PipelineError, ValueError) as exc:
        _fail(str(exc))
    s = stage.summary
    if s.total_pairs:
        click.echo(
            f"pairs: {s.total_pairs} total, {s.consistent_pairs} consistent "
            f"({100 * s.overall_consistency:.2f}%), selection confidence "
            f"{100 * s.selection_confidence:.2f}%"
        )
    else:
        click.echo("pairs: no cross-institution duplicates found")
    for warning in s.warnings:
        click.echo(f"warning: {warning}", err=True)
    if stage.histogram is not None and stage.histogram.overflow_warning:
        click.echo(f"warning: {stage.histogram.overflow_warning}", err=True)
    click.echo(f"borderline papers flagged: {len(stage.borderline)}")


@main.command("export-plots")
@click.option("--out", required=True, type=click.Path(exists=True, file_okay=False),
              help="Run directory with results.csv.")
def export_plots(out):
    """Write per-institution dot-plot data plus boundary overlays."""
    try:
        written = pl.run_export_plots(Path(out))
    except pl.PipelineError as exc:
        raise click.UsageError(f"{exc}")
    for path in written:
        click.echo(str(path))


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True, help="Bind address.")
@click.option("--port", default=8077, show_default=True, help="Bind port.")
@click.option("--data-dir", default="refpool-data", show_default=True,
              type=click.Path(file_okay=False), help="Job persistence directory.")
def serve(host, port, data_dir):
    """Run the HTTP job service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(data_dir), host=host, port=port)


if __name__ == "__main__":  # pragma: no cover
    main()
