"""Duplicate consistency, score-variation statistics, borderline triage."""

from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .calibration import BoundarySet, StarGrade, assign_star
from .corpus import OutputRecord, SubmissionSet

BOUNDARY_NAMES = {"b12": "1*/2*", "b23": "2*/3*", "b34": "3*/4*", "bU1": "U/1*"}

DEFAULT_VARIATION_EDGES = (0.0, 1.0, 3.0, 5.0, 7.0, 10.0, 15.0, 25.0)
DEFAULT_EPSILON = 2.0


class AnalysisError(ValueError):
    pass


# ── duplicates ───────────────────────────────────────────────────────


@dataclass(frozen=True)
class DuplicatePair:
    record_a: OutputRecord
    record_b: OutputRecord
    matched_on: str  # "doi" or "title"
    group_size: int = 2

    @property
    def flagged_large_group(self) -> bool:
        return self.group_size > 2


def find_duplicates(sets: Sequence[SubmissionSet]) -> list[DuplicatePair]:
    """Cross-institution pairs of the same output.

    DOI equality is authoritative; title digests catch records whose DOI
    is missing.  Same-institution repeats are not duplicates here.  A key
    shared by more than two institutions yields every pairing, flagged.
    """
    records = [r for s in sets for r in s.records]
    by_key: dict[tuple[str, str], list[OutputRecord]] = {}
    for record in records:
        if record.doi:
            by_key.setdefault(("doi", record.doi), []).append(record)
        elif record.title_digest:
            by_key.setdefault(("title", record.title_digest), []).append(record)

    pairs: list[DuplicatePair] = []
    for (kind, _), group in by_key.items():
        distinct = []
        seen_inst = set()
        for record in group:
            if record.institution_id in seen_inst:
                continue
            seen_inst.add(record.institution_id)
            distinct.append(record)
        if len(distinct) < 2:
            continue
        for i in range(len(distinct)):
            for j in range(i + 1, len(distinct)):
                pairs.append(
                    DuplicatePair(
                        record_a=distinct[i],
                        record_b=distinct[j],
                        matched_on=kind,
                        group_size=len(distinct),
                    )
                )
    return pairs


# ── pair consistency ─────────────────────────────────────────────────


@dataclass(frozen=True)
class PairReport:
    pair_id: str
    record_a: str
    record_b: str
    score_a: float
    score_b: float
    crosses_boundary: bool
    crucial_23_cross: bool
    nominal_grades: tuple[StarGrade, ...]

    def __post_init__(self) -> None:
        if self.crucial_23_cross and not self.crosses_boundary:
            raise AnalysisError(f"{self.pair_id}: crucial cross without a cross")

    @property
    def abs_diff(self) -> float:
        return abs(self.score_a - self.score_b)

    @property
    def nominal_label(self) -> str:
        return "/".join(g.label for g in self.nominal_grades)


@dataclass
class ConsistencySummary:
    total_pairs: int = 0
    consistent_pairs: int = 0
    crossing_pairs: int = 0
    crucial_23_crossings: int = 0
    warnings: list[str] = field(default_factory=list)

    @property
    def overall_consistency(self) -> float:
        return self.consistent_pairs / self.total_pairs if self.total_pairs else 0.0

    @property
    def selection_confidence(self) -> float:
        if not self.total_pairs:
            return 0.0
        return 1.0 - self.crucial_23_crossings / self.total_pairs


def pair_consistency(
    pairs: Iterable[tuple[str, str]],
    mean_scores: Mapping[str, float],
    boundaries: BoundarySet,
) -> tuple[list[PairReport], ConsistencySummary]:
    """Grade both members of each duplicate pair against one boundary set.

    A pair whose two grades differ crosses a boundary; crossing the
    funding-relevant 2*/3* line is counted separately as crucial.  Pairs
    with an unscored member are skipped and reported in the summary.
    """
    reports: list[PairReport] = []
    summary = ConsistencySummary()
    for n, (rid_a, rid_b) in enumerate(pairs, start=1):
        if rid_a not in mean_scores or rid_b not in mean_scores:
            missing = rid_a if rid_a not in mean_scores else rid_b
            summary.warnings.append(f"pair {n}: no score for {missing}, skipped")
            continue
        score_a, score_b = mean_scores[rid_a], mean_scores[rid_b]
        grade_a = assign_star(score_a, boundaries)
        grade_b = assign_star(score_b, boundaries)
        crosses = grade_a != grade_b
        low, high = min(grade_a, grade_b), max(grade_a, grade_b)
        crucial = crosses and low <= StarGrade.TWO and high >= StarGrade.THREE
        grades = (grade_a,) if not crosses else (low, high)
        reports.append(
            PairReport(
                pair_id=f"Pair {len(reports) + 1}",
                record_a=rid_a,
                record_b=rid_b,
                score_a=score_a,
                score_b=score_b,
                crosses_boundary=crosses,
                crucial_23_cross=crucial,
                nominal_grades=grades,
            )
        )
        summary.total_pairs += 1
        if crosses:
            summary.crossing_pairs += 1
            if crucial:
                summary.crucial_23_crossings += 1
        else:
            summary.consistent_pairs += 1
    return reports, summary


# ── variation histogram ──────────────────────────────────────────────


@dataclass(frozen=True)
class VariationHistogram:
    edges: tuple[float, ...]
    counts: tuple[int, ...]
    total: int
    observed_min: float
    observed_max: float
    overflow: int = 0  # variations beyond the last edge, folded into it

    def __post_init__(self) -> None:
        if sum(self.counts) != self.total:
            raise AnalysisError("histogram counts must sum to the paper count")

    @property
    def percentages(self) -> tuple[float, ...]:
        if not self.total:
            return tuple(0.0 for _ in self.counts)
        return tuple(100.0 * c / self.total for c in self.counts)

    @property
    def overflow_warning(self) -> str:
        if not self.overflow:
            return ""
        return (
            f"{self.overflow} variation value(s) above the last edge "
            f"{self.edges[-1]} were folded into the final bucket"
        )


def variation_histogram(
    papers: Sequence,
    edges: Sequence[float] = DEFAULT_VARIATION_EDGES,
) -> VariationHistogram:
    """Bucket per-paper sample spreads: first edge ≥ spread wins."""
    if list(edges) != sorted(edges) or len(set(edges)) != len(edges):
        raise AnalysisError("edges must be strictly increasing")
    counts = [0] * len(edges)
    overflow = 0
    variations = []
    for paper in papers:
        if paper.sample_count < 2:
            raise AnalysisError(f"{paper.record_id}: needs at least 2 samples")
        spread = paper.variation
        variations.append(spread)
        for idx, edge in enumerate(edges):
            if spread <= edge:
                counts[idx] += 1
                break
        else:
            counts[-1] += 1
            overflow += 1
    return VariationHistogram(
        edges=tuple(float(e) for e in edges),
        counts=tuple(counts),
        total=len(variations),
        observed_min=min(variations, default=0.0),
        observed_max=max(variations, default=0.0),
        overflow=overflow,
    )


# ── borderline flagging ──────────────────────────────────────────────


@dataclass(frozen=True)
class BorderlineFlag:
    record_id: str
    mean: float
    min_score: float
    max_score: float
    nearest_boundary: str
    reason: str
    distance: float


def flag_borderline(
    papers: Sequence,
    boundaries: BoundarySet,
    epsilon: float = DEFAULT_EPSILON,
) -> list[BorderlineFlag]:
    """Papers needing human eyes: spread straddling a cut, or mean near one.

    The 2*/3* boundary decides funding, so its flags sort first; after
    that, closest means lead.
    """
    named = boundaries.named()
    flags: list[BorderlineFlag] = []
    for paper in papers:
        triggers = []
        for key, estimate in named.items():
            point = estimate.point
            distance = abs(paper.overall_mean - point)
            if paper.overall_min <= point <= paper.overall_max:
                triggers.append(("straddles", key, distance))
            elif distance < epsilon:
                triggers.append(("near", key, distance))
        if not triggers:
            continue
        # Straddling outranks proximity; the funding cut outranks both
        # neighbours; remaining ties go to the closest point.
        triggers.sort(key=lambda t: (t[0] != "straddles", t[1] != "b23", t[2]))
        kind, key, distance = triggers[0]
        flags.append(
            BorderlineFlag(
                record_id=paper.record_id,
                mean=paper.overall_mean,
                min_score=paper.overall_min,
                max_score=paper.overall_max,
                nearest_boundary=BOUNDARY_NAMES[key],
                reason=f"{kind} {BOUNDARY_NAMES[key]}",
                distance=distance,
            )
        )
    flags.sort(key=lambda f: (f.nearest_boundary != "2*/3*", f.distance, f.record_id))
    return flags


# ── boundary dispersion ──────────────────────────────────────────────


@dataclass(frozen=True)
class DispersionStat:
    mean: float
    stddev: float
    n: int


def boundary_dispersion(per_institution: Sequence[BoundarySet]) -> dict[str, DispersionStat]:
    """Sample mean and standard deviation of each boundary's points."""
    if len(per_institution) < 2:
        raise AnalysisError("dispersion needs at least 2 institutions")
    out: dict[str, DispersionStat] = {}
    for key in ("b12", "b23", "b34"):
        points = [bs.named()[key].point for bs in per_institution]
        out[key] = DispersionStat(
            mean=statistics.fmean(points),
            stddev=statistics.stdev(points),
            n=len(points),
        )
    return out


# ── CSV exports ──────────────────────────────────────────────────────


def write_pairs_csv(reports: Sequence[PairReport], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["pair", "record_a", "record_b", "abs_diff", "cross_boundary", "nominal_score"])
        for r in reports:
            writer.writerow(
                [r.pair_id, r.record_a, r.record_b, f"{r.abs_diff:.2f}",
                 str(r.crosses_boundary).lower(), r.nominal_label]
            )


def write_variation_csv(hist: VariationHistogram, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["pct_of_papers", "total_papers", "variation_edge"])
        for pct, count, edge in zip(hist.percentages, hist.counts, hist.edges):
            writer.writerow([f"{pct:.1f}", count, _trim(edge)])


def write_borderline_csv(flags: Sequence[BorderlineFlag], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["record_id", "mean", "min", "max", "nearest_boundary", "reason"])
        for f in flags:
            writer.writerow(
                [f.record_id, f"{f.mean:.2f}", f"{f.min_score:.2f}", f"{f.max_score:.2f}",
                 f.nearest_boundary, f.reason]
            )


def _trim(value: float) -> str:
    text = f"{value:g}"
    return text
