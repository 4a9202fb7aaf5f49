"""Command-line interface tests, driven through click's runner."""

import csv
import json
import shutil

import pytest
from click.testing import CliRunner

from refpool import pipeline as pl
from refpool.cli import main
from refpool.synthetic import InstitutionPlan, build_corpus

PLANS = [
    InstitutionPlan(name="Inst-01", role="eligible", n_journal=32),
    InstitutionPlan(name="Inst-02", role="eligible", n_journal=34),
    InstitutionPlan(name="Inst-03", role="availability", n_journal=30, n_missing_docs=8),
]


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli-corpus")
    return build_corpus(root, seed=11, plans=[*PLANS], duplicate_pairs=2)


@pytest.fixture(scope="module")
def harvested(tmp_path_factory, corpus):
    out = tmp_path_factory.mktemp("cli-run")
    result = CliRunner().invoke(
        main,
        ["harvest", "--results-sheet", str(corpus.sheet), "--uoa", "17",
         "--out", str(out), "--drop-in", str(corpus.docs_dir)],
    )
    assert result.exit_code == 0, result.output
    return out


@pytest.fixture()
def fresh_run(tmp_path, harvested):
    """Writable copy of the harvested run directory."""
    out = tmp_path / "run"
    shutil.copytree(harvested, out)
    return out


def run_cli(*args):
    return CliRunner().invoke(main, [str(a) for a in args])


def score_args(out, *extra):
    return ["score", "--out", out, "--backend", "mock", "--seed", "7", *extra]


# ── help coverage ────────────────────────────────────────────────────

HELP_FLAGS = {
    "harvest": ["--results-sheet", "--uoa", "--out", "--resolver-url",
                "--drop-in", "--max-in-flight"],
    "score": ["--out", "--backend", "--base-url", "--model-id", "--seed",
              "--samples", "--temperature", "--prompts", "--min-words",
              "--max-retries", "--max-in-flight"],
    "calibrate": ["--out", "--min-availability"],
    "analyze": ["--out", "--epsilon"],
    "export-plots": ["--out"],
    "serve": ["--host", "--port", "--data-dir"],
}


@pytest.mark.parametrize("command", sorted(HELP_FLAGS))
def test_help_documents_every_flag(command):
    result = run_cli(command, "--help")
    assert result.exit_code == 0
    for flag in HELP_FLAGS[command]:
        assert flag in result.output, f"{command} --help missing {flag}"


def test_group_help_documents_anonymize():
    result = run_cli("--help")
    assert result.exit_code == 0
    assert "--anonymize" in result.output
    assert "--no-anonymize" in result.output


# ── harvest ──────────────────────────────────────────────────────────


def test_harvest_reports_counts(corpus, tmp_path):
    result = run_cli(
        "harvest", "--results-sheet", corpus.sheet, "--uoa", "17",
        "--out", tmp_path / "h", "--drop-in", corpus.docs_dir,
    )
    assert result.exit_code == 0
    assert "3 institution(s)" in result.output
    assert "88 document(s) available" in result.output  # 32 + 34 + 22
    assert (tmp_path / "h" / pl.MANIFEST).exists()


def test_harvest_missing_flag_is_usage_error(tmp_path):
    result = run_cli("harvest", "--uoa", "17", "--out", tmp_path)
    assert result.exit_code == 2
    assert "--results-sheet" in result.output + result.stderr


def test_harvest_unknown_uoa_fails(corpus, tmp_path):
    result = run_cli(
        "harvest", "--results-sheet", corpus.sheet, "--uoa", "99", "--out", tmp_path / "x",
    )
    assert result.exit_code == 1
    assert "no usable rows" in result.stderr


# ── score ────────────────────────────────────────────────────────────


def test_score_same_seed_twice_identical(fresh_run):
    assert run_cli(*score_args(fresh_run)).exit_code == 0
    first = (fresh_run / pl.RESULTS).read_bytes()
    assert run_cli(*score_args(fresh_run)).exit_code == 0
    assert (fresh_run / pl.RESULTS).read_bytes() == first


def test_score_without_manifest_is_usage_error(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    result = run_cli("score", "--out", empty)
    assert result.exit_code == 2
    assert "refpool harvest" in result.output + result.stderr


def test_score_partial_failure_exit_code(fresh_run):
    manifest = list(csv.DictReader(open(fresh_run / pl.MANIFEST)))
    refs = [row["document_ref"] for row in manifest if row["document_ref"]]
    # Duplicate submissions share one stored file; corrupt a unique one.
    victim = next(
        row for row in manifest
        if row["document_ref"] and refs.count(row["document_ref"]) == 1
    )
    (fresh_run / victim["document_ref"]).write_text("too short")
    result = run_cli(*score_args(fresh_run))
    assert result.exit_code == 3
    assert victim["record_id"] in result.stderr
    assert "1 paper(s) failed" in result.stderr
    assert (fresh_run / pl.RESULTS).exists()  # partial results still land


def test_score_anonymizes_by_default(fresh_run):
    assert run_cli(*score_args(fresh_run)).exit_code == 0
    text = (fresh_run / pl.RESULTS).read_text()
    assert "University A" in text
    assert "Inst-01" not in text


def test_no_anonymize_flag(fresh_run):
    result = run_cli("--no-anonymize", *score_args(fresh_run))
    assert result.exit_code == 0
    text = (fresh_run / pl.RESULTS).read_text()
    assert "Inst-01" in text
    assert "University A" not in text


def test_prompt_file_overrides_and_flag_precedence(fresh_run, tmp_path):
    prompt_file = tmp_path / "prompts.toml"
    prompt_file.write_text(
        'system_text = "You grade research outputs."\n'
        'user_preamble = "Grade the paper below."\n'
        "temperature = 0.4\nsamples = 3\n"
    )
    result = run_cli(*score_args(fresh_run, "--prompts", prompt_file))
    assert result.exit_code == 0
    meta = json.loads((fresh_run / pl.RUN_META).read_text())
    assert meta["temperature"] == 0.4
    assert meta["samples_per_paper"] == 3

    result = run_cli(*score_args(fresh_run, "--prompts", prompt_file, "--temperature", "0.1"))
    assert result.exit_code == 0
    meta = json.loads((fresh_run / pl.RUN_META).read_text())
    assert meta["temperature"] == 0.1  # explicit flag wins
    assert meta["samples_per_paper"] == 3


# ── calibrate / analyze ──────────────────────────────────────────────


@pytest.fixture(scope="module")
def scored(tmp_path_factory, harvested):
    out = tmp_path_factory.mktemp("cli-scored")
    shutil.rmtree(out)
    shutil.copytree(harvested, out)
    assert run_cli(*score_args(out)).exit_code == 0
    return out


def test_calibrate_lists_exclusion_and_exits_zero(scored):
    result = run_cli("calibrate", "--out", scored)
    assert result.exit_code == 0
    assert "University C: excluded (availability)" in result.output
    assert "overall:" in result.output
    assert "2 eligible, 1 excluded" in result.output
    assert (scored / pl.BOUNDARIES).exists()


def test_calibrate_before_score_is_usage_error(fresh_run):
    result = run_cli("calibrate", "--out", fresh_run)
    assert result.exit_code == 2
    assert "refpool score" in result.output + result.stderr


def test_analyze_reports_pairs_and_borderline(scored):
    run_cli("calibrate", "--out", scored)
    result = run_cli("analyze", "--out", scored)
    assert result.exit_code == 0
    assert "pairs: 2 total" in result.output
    assert "borderline papers flagged:" in result.output
    assert (scored / pl.PAIRS).exists()
    assert (scored / pl.VARIATION).exists()


# ── export-plots ─────────────────────────────────────────────────────


def test_export_plots_44_paper_institution(tmp_path):
    corpus = build_corpus(
        tmp_path / "c", seed=11,
        plans=[InstitutionPlan(name="Inst-01", role="eligible", n_journal=44)],
        duplicate_pairs=0,
    )
    out = tmp_path / "run"
    assert run_cli(
        "harvest", "--results-sheet", corpus.sheet, "--uoa", "17",
        "--out", out, "--drop-in", corpus.docs_dir,
    ).exit_code == 0
    assert run_cli(*score_args(out)).exit_code == 0
    assert run_cli("calibrate", "--out", out).exit_code == 0
    result = run_cli("export-plots", "--out", out)
    assert result.exit_code == 0

    dots = list(csv.DictReader(open(out / "plots" / "dots_university-a.csv")))
    assert len(dots) == 44
    overlay = list(csv.DictReader(open(out / "plots" / "overlay.csv")))
    assert [row["boundary"] for row in overlay] == ["b12", "b23", "b34"]
    assert (out / "plots" / "summary_ranges.csv").exists()


def test_export_plots_before_score_is_usage_error(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    result = run_cli("export-plots", "--out", empty)
    assert result.exit_code == 2
