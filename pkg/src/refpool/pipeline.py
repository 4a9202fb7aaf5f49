"""Stage runners and artifact I/O shared by the CLI and the job service.

A run lives in one directory: harvest writes the corpus manifest, score
adds results and provenance, calibrate adds boundary tables, analyze
adds the consistency/variation/borderline reports, export-plots emits
plot-ready data.  Every stage reads only files earlier stages wrote, so
the stages compose with no manual glue.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from . import analysis as an
from . import calibration as cal
from .backends import Backend, HttpBackend, MockBackend
from .corpus import (
    AVAILABLE,
    JOURNAL,
    AnonymizationMap,
    SubmissionSet,
    anonymize,
    availability_ratio,
    ingest_results_sheet,
    read_corpus,
    write_institutions,
    write_manifest,
)
from .extract import ExtractionError, extract_document
from .harvest import ResolverClient, harvest_all
from .prompts import PromptPair
from .scorer import ScorerConfig, score_batch

MANIFEST = "manifest.csv"
INSTITUTIONS = "institutions.csv"
RESULTS = "results.csv"
AUDIT = "audit.jsonl"
ANON_MAP = "anonymization_map.json"
RUN_META = "run_meta.json"
BOUNDARIES = "boundaries.csv"
OVERALL_BOUNDARIES = "overall_boundaries.csv"
PAIRS = "pairs.csv"
VARIATION = "variation.csv"
BORDERLINE = "borderline.csv"
ANALYSIS_SUMMARY = "analysis_summary.json"

RESULTS_COLUMNS = (
    "paper_id",
    "institution_id",
    "mean_score",
    "min_score",
    "max_score",
    "rigour_mean",
    "originality_mean",
    "significance_mean",
    "rigour_comment",
    "originality_comment",
    "significance_comment",
    "star_4pt",
)


class PipelineError(RuntimeError):
    pass


def make_backend(kind: str, seed: int = 0, base_url: str = "") -> Backend:
    if kind == "mock":
        return MockBackend(seed=seed)
    if kind == "http":
        if not base_url:
            raise PipelineError("http backend needs a base URL")
        return HttpBackend(base_url=base_url)
    raise PipelineError(f"unknown backend kind: {kind!r}")


# ── harvest stage ────────────────────────────────────────────────────


def run_harvest(
    sheet: str | Path,
    uoa: str,
    out_dir: str | Path,
    resolver: ResolverClient | None = None,
    drop_in: str | Path | None = None,
    max_in_flight: int = 4,
) -> tuple[list[SubmissionSet], list[str]]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ingest = ingest_results_sheet(sheet, uoa)
    sets = ingest.sets
    if resolver is not None or drop_in is not None:
        sets = harvest_all(
            sets,
            resolver,
            out / "corpus",
            drop_in_dir=drop_in,
            max_in_flight=max_in_flight,
        )
    sets = [_relative_refs(s, out) for s in sets]
    write_manifest(sets, out / MANIFEST)
    write_institutions(sets, out / INSTITUTIONS)
    return sets, ingest.row_errors


def _relative_refs(submission: SubmissionSet, out: Path) -> SubmissionSet:
    """Store document paths relative to the run directory, so the whole
    directory can be moved or compared byte-for-byte across runs."""
    base = out.resolve()
    records = []
    for record in submission.records:
        ref = record.document_ref
        if ref:
            path = Path(ref).resolve()
            if path.is_relative_to(base):
                record = replace(record, document_ref=path.relative_to(base).as_posix())
        records.append(record)
    return submission.with_records(records)


# ── score stage ──────────────────────────────────────────────────────


@dataclass
class ScoreStageResult:
    scored: int = 0
    failed: list[str] = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return bool(self.failed)


def _display_ids(record, sets_map, mapping: AnonymizationMap | None) -> tuple[str, str]:
    if mapping is None:
        return record.record_id, record.institution_id
    inst = mapping.institutions[record.institution_id]
    return f"{inst} {mapping.records[record.record_id]}", inst


def run_score(
    out_dir: str | Path,
    config: ScorerConfig,
    backend: Backend,
    prompts: PromptPair | None = None,
    backend_kind: str = "mock",
    seed: int = 0,
    anonymize_export: bool = True,
    min_words: int = 500,
) -> ScoreStageResult:
    """Score every available journal document and export results.csv.

    Star grades in the export are assigned against the published overall
    reference boundaries; calibration may later produce corpus-specific
    ones, and the provenance file records which set was used here.
    """
    out = Path(out_dir)
    prompts = prompts or PromptPair()
    sets = read_corpus(out / MANIFEST, out / INSTITUTIONS)
    result = ScoreStageResult()

    jobs: list[tuple[str, str]] = []
    record_by_id = {}
    for submission in sets:
        for record in submission.records:
            record_by_id[record.record_id] = record
            if record.output_kind != JOURNAL or record.availability != AVAILABLE:
                continue
            doc_path = Path(record.document_ref)
            if not doc_path.is_absolute():
                doc_path = out / doc_path
            try:
                text = extract_document(doc_path, min_words=min_words)
            except (ExtractionError, OSError) as exc:
                result.failed.append(f"{record.record_id}: {exc}")
                continue
            jobs.append((record.record_id, text))

    audit_lines: list[str] = []
    scores = score_batch(jobs, prompts, config, backend, audit=audit_lines.append)
    mapping = anonymize(sets) if anonymize_export else None
    if mapping is not None:
        mapping.save(out / ANON_MAP)

    rows = []
    for submission in sets:
        for record in submission.records:
            score = scores.get(record.record_id)
            if score is None:
                continue
            if score.failed:
                result.failed.append(f"{record.record_id}: {score.failure_reason}")
                continue
            paper_id, inst_id = _display_ids(record, sets, mapping)
            mean = round(score.overall_mean, 2)
            comments = score.critical_comments()
            rows.append(
                [
                    paper_id,
                    inst_id,
                    f"{mean:.2f}",
                    f"{score.overall_min:.2f}",
                    f"{score.overall_max:.2f}",
                    f"{score.criterion_mean('rigour'):.2f}",
                    f"{score.criterion_mean('originality'):.2f}",
                    f"{score.criterion_mean('significance'):.2f}",
                    comments["rigour"],
                    comments["originality"],
                    comments["significance"],
                    cal.assign_star(mean, cal.reference_boundaries()).label,
                ]
            )
            result.scored += 1

    with open(out / RESULTS, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULTS_COLUMNS)
        writer.writerows(rows)

    # Completion order is racy; the audit file is not, thanks to sorting
    # by the stable (record_id, slot) key embedded in each line.
    audit_lines.sort(key=lambda l: (json.loads(l)["record_id"], json.loads(l)["slot"]))
    (out / AUDIT).write_text("".join(line + "\n" for line in audit_lines))

    meta = {
        "anonymized": anonymize_export,
        "backend": backend_kind,
        "min_words": min_words,
        "model_id": config.model_id,
        "prompt_digest": prompts.digest(),
        "samples_per_paper": config.samples_per_paper,
        "seed": seed,
        "star_boundaries": {
            "b12": cal.REFERENCE_B12,
            "b23": cal.REFERENCE_B23,
            "b34": cal.REFERENCE_B34,
            "source": "published reference set",
        },
        "temperature": config.temperature,
        "failed_papers": sorted(result.failed),
    }
    (out / RUN_META).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return result


# ── shared readers ───────────────────────────────────────────────────


@dataclass(frozen=True)
class ResultRow:
    """One results.csv line, read back with enough typing to compute on."""

    paper_id: str
    institution_id: str
    mean: float
    min_score: float
    max_score: float
    star: str
    sample_count: int

    @property
    def record_id(self) -> str:
        return self.paper_id

    @property
    def overall_mean(self) -> float:
        return self.mean

    @property
    def overall_min(self) -> float:
        return self.min_score

    @property
    def overall_max(self) -> float:
        return self.max_score

    @property
    def variation(self) -> float:
        return self.max_score - self.min_score


def read_results(out_dir: str | Path) -> list[ResultRow]:
    out = Path(out_dir)
    if not (out / RESULTS).exists():
        raise PipelineError(f"no {RESULTS} in {out}; run score first")
    meta = read_meta(out_dir)
    k = int(meta.get("samples_per_paper", 1))
    rows = []
    with open(out / RESULTS, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            rows.append(
                ResultRow(
                    paper_id=row["paper_id"],
                    institution_id=row["institution_id"],
                    mean=float(row["mean_score"]),
                    min_score=float(row["min_score"]),
                    max_score=float(row["max_score"]),
                    star=row["star_4pt"],
                    sample_count=k,
                )
            )
    return rows


def read_meta(out_dir: str | Path) -> dict:
    path = Path(out_dir) / RUN_META
    if not path.exists():
        return {}
    return json.loads(path.read_text())


def _load_mapping(out_dir: Path) -> AnonymizationMap | None:
    path = out_dir / ANON_MAP
    if not path.exists():
        return None
    return AnonymizationMap.load(path)


# ── calibrate stage ──────────────────────────────────────────────────


@dataclass
class InstitutionCalibration:
    institution_id: str  # display form, matching results.csv
    boundaries: cal.BoundarySet
    eligibility: cal.Eligibility
    availability: float
    scored: int
    declared_total: int


@dataclass
class CalibrateStageResult:
    institutions: list[InstitutionCalibration] = field(default_factory=list)
    overall: cal.BoundarySet | None = None

    @property
    def excluded(self) -> list[InstitutionCalibration]:
        return [i for i in self.institutions if not i.eligibility.eligible]


def run_calibrate(
    out_dir: str | Path, min_availability: float = 0.9
) -> CalibrateStageResult:
    """Reverse-engineer per-institution boundaries and aggregate them."""
    out = Path(out_dir)
    sets = read_corpus(out / MANIFEST, out / INSTITUTIONS)
    mapping = _load_mapping(out)
    rows = read_results(out)
    by_inst: dict[str, list[ResultRow]] = {}
    for row in rows:
        by_inst.setdefault(row.institution_id, []).append(row)

    stage = CalibrateStageResult()
    for submission in sets:
        display_inst = (
            mapping.institutions[submission.institution_id]
            if mapping
            else submission.institution_id
        )
        scored = by_inst.get(display_inst, [])
        if not scored:
            continue
        # Rank descending; ties broken by paper id so reruns agree.
        ranked = sorted(scored, key=lambda r: (-r.mean, r.paper_id))
        scores = [r.mean for r in ranked]
        counts = cal.profile_to_counts(
            submission.reported_profile, submission.declared_total
        )
        m_missing = submission.declared_total - len(scores)
        if m_missing < 0:
            raise PipelineError(
                f"{submission.institution_id}: more scored papers than declared"
            )
        boundaries = cal.infer_boundaries(scores, counts, m_missing)
        availability = availability_ratio(submission)
        eligibility = cal.check_eligibility(
            boundaries, availability, min_availability=min_availability
        )
        stage.institutions.append(
            InstitutionCalibration(
                institution_id=display_inst,
                boundaries=boundaries,
                eligibility=eligibility,
                availability=availability,
                scored=len(scores),
                declared_total=submission.declared_total,
            )
        )

    eligible = [i.boundaries for i in stage.institutions if i.eligibility.eligible]
    if eligible:
        stage.overall = cal.aggregate_boundaries(eligible)

    with open(out / BOUNDARIES, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["institution_id", "boundary", "lo", "hi", "point", "eligible", "exclusion_reason"]
        )
        for inst in stage.institutions:
            for key, est in inst.boundaries.named().items():
                writer.writerow(
                    [
                        inst.institution_id,
                        key,
                        f"{est.lo:.4f}",
                        f"{est.hi:.4f}",
                        f"{est.point:.4f}",
                        str(inst.eligibility.eligible).lower(),
                        inst.eligibility.reason or "",
                    ]
                )

    with open(out / OVERALL_BOUNDARIES, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["boundary", "mean_point", "min_point", "max_point", "stddev"])
        if stage.overall is not None:
            dispersion = (
                an.boundary_dispersion(eligible) if len(eligible) >= 2 else None
            )
            for key, est in stage.overall.named().items():
                stddev = dispersion[key].stddev if dispersion else 0.0
                writer.writerow(
                    [key, f"{est.point:.4f}", f"{est.lo:.4f}", f"{est.hi:.4f}", f"{stddev:.4f}"]
                )
    return stage


def read_overall_boundaries(out_dir: str | Path) -> cal.BoundarySet | None:
    path = Path(out_dir) / OVERALL_BOUNDARIES
    if not path.exists():
        return None
    points: dict[str, cal.BoundaryEstimate] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            points[row["boundary"]] = cal.BoundaryEstimate(
                lo=float(row["min_point"]),
                hi=float(row["max_point"]),
                point=float(row["mean_point"]),
            )
    if not points:
        return None
    return cal.BoundarySet(b12=points["b12"], b23=points["b23"], b34=points["b34"])


# ── analyze stage ────────────────────────────────────────────────────


@dataclass
class AnalyzeStageResult:
    pair_reports: list[an.PairReport] = field(default_factory=list)
    summary: an.ConsistencySummary = field(default_factory=an.ConsistencySummary)
    histogram: an.VariationHistogram | None = None
    borderline: list[an.BorderlineFlag] = field(default_factory=list)


def run_analyze(out_dir: str | Path, epsilon: float = an.DEFAULT_EPSILON) -> AnalyzeStageResult:
    out = Path(out_dir)
    sets = read_corpus(out / MANIFEST, out / INSTITUTIONS)
    mapping = _load_mapping(out)
    rows = read_results(out)
    boundaries = read_overall_boundaries(out) or cal.reference_boundaries()

    def display(record) -> str:
        if mapping is None:
            return record.record_id
        return f"{mapping.institutions[record.institution_id]} {mapping.records[record.record_id]}"

    scores = {row.paper_id: row.mean for row in rows}
    duplicate_pairs = [
        (display(p.record_a), display(p.record_b)) for p in an.find_duplicates(sets)
    ]
    reports, summary = an.pair_consistency(duplicate_pairs, scores, boundaries)
    histogram = an.variation_histogram(rows) if rows else None
    flags = an.flag_borderline(rows, boundaries, epsilon=epsilon)

    an.write_pairs_csv(reports, out / PAIRS)
    if histogram is not None:
        an.write_variation_csv(histogram, out / VARIATION)
    an.write_borderline_csv(flags, out / BORDERLINE)
    payload = {
        "consistent_pairs": summary.consistent_pairs,
        "crossing_pairs": summary.crossing_pairs,
        "crucial_23_crossings": summary.crucial_23_crossings,
        "epsilon": epsilon,
        "overall_consistency": round(summary.overall_consistency, 6),
        "selection_confidence": round(summary.selection_confidence, 6),
        "total_pairs": summary.total_pairs,
        "warnings": summary.warnings,
    }
    if histogram is not None and histogram.overflow_warning:
        payload["variation_warning"] = histogram.overflow_warning
    (out / ANALYSIS_SUMMARY).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return AnalyzeStageResult(
        pair_reports=reports, summary=summary, histogram=histogram, borderline=flags
    )


# ── plot export ──────────────────────────────────────────────────────


def run_export_plots(out_dir: str | Path) -> list[Path]:
    """Emit dot-plot data per institution plus boundary overlay files."""
    out = Path(out_dir)
    rows = read_results(out)
    if not rows:
        raise PipelineError("no results to plot; run score first")
    plots = out / "plots"
    plots.mkdir(exist_ok=True)
    written: list[Path] = []

    by_inst: dict[str, list[ResultRow]] = {}
    for row in rows:
        by_inst.setdefault(row.institution_id, []).append(row)
    for inst, inst_rows in by_inst.items():
        slug = inst.lower().replace(" ", "-")
        path = plots / f"dots_{slug}.csv"
        ranked = sorted(inst_rows, key=lambda r: (-r.mean, r.paper_id))
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["record", "min", "mean", "max"])
            for r in ranked:
                writer.writerow(
                    [r.paper_id, f"{r.min_score:.2f}", f"{r.mean:.2f}", f"{r.max_score:.2f}"]
                )
        written.append(path)

    boundaries = read_overall_boundaries(out) or cal.reference_boundaries()
    overlay = plots / "overlay.csv"
    with open(overlay, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["boundary", "point"])
        for key, est in boundaries.named().items():
            writer.writerow([key, f"{est.point:.4f}"])
    written.append(overlay)

    summary_path = plots / "summary_ranges.csv"
    source = Path(out_dir) / OVERALL_BOUNDARIES
    if source.exists():
        summary_path.write_bytes(source.read_bytes())
        written.append(summary_path)
    return written
