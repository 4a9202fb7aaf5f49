"""Reverse-engineer star-grade score boundaries from published grade profiles.

Given the percentage of an institution's outputs awarded each star grade and a
ranked list of per-paper scores, the cut between two grades must sit between
the last paper of the higher grade and the first paper of the lower one.  With
papers missing from the scored set the exact rank of each cut is unknown, so
every boundary carries a feasible interval [lo, hi] instead of a single value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from statistics import mean
from typing import Optional, Sequence

# Published overall calibration on the 0-100 scale, used as the default
# reference when a run has not produced its own boundary set.
REFERENCE_B12 = 49.35
REFERENCE_B23 = 58.52
REFERENCE_B34 = 69.06

# Tolerance for published profiles, which are rounded per grade.
PROFILE_SUM_MIN = 99.0
PROFILE_SUM_MAX = 101.0

# Half-gap used for the extreme-cut rule when only one score is available and
# no adjacent gap exists to average.
_SINGLE_SCORE_HALF_GAP = 0.5


class CalibrationError(ValueError):
    """Raised for inconsistent profiles, counts or score lists."""


class StarGrade(IntEnum):
    """REF-style quality grade, ordered U < 1* < 2* < 3* < 4*."""

    U = 0
    ONE = 1
    TWO = 2
    THREE = 3
    FOUR = 4

    @property
    def label(self) -> str:
        return _GRADE_LABELS[self]

    @classmethod
    def from_label(cls, label: str) -> "StarGrade":
        for grade, text in _GRADE_LABELS.items():
            if text == label:
                return grade
        raise CalibrationError(f"unknown grade label: {label!r}")


_GRADE_LABELS = {
    StarGrade.U: "U",
    StarGrade.ONE: "1*",
    StarGrade.TWO: "2*",
    StarGrade.THREE: "3*",
    StarGrade.FOUR: "4*",
}


@dataclass(frozen=True)
class GradeProfile:
    """Percentage of outputs at each grade, as published for one submission."""

    pct_4: float
    pct_3: float
    pct_2: float
    pct_1: float
    pct_u: float

    def __post_init__(self) -> None:
        for name, value in self.as_dict().items():
            if not 0.0 <= value <= 100.0:
                raise CalibrationError(f"{name}={value} outside [0, 100]")
        total = self.total()
        if not PROFILE_SUM_MIN <= total <= PROFILE_SUM_MAX:
            raise CalibrationError(
                f"profile sums to {total:.4f}, outside "
                f"[{PROFILE_SUM_MIN}, {PROFILE_SUM_MAX}]"
            )

    def total(self) -> float:
        return self.pct_4 + self.pct_3 + self.pct_2 + self.pct_1 + self.pct_u

    def as_dict(self) -> dict[str, float]:
        return {
            "pct_4": self.pct_4,
            "pct_3": self.pct_3,
            "pct_2": self.pct_2,
            "pct_1": self.pct_1,
            "pct_u": self.pct_u,
        }


@dataclass(frozen=True)
class GradeCounts:
    """Integer paper counts per grade for a submission of N outputs."""

    n_4: int
    n_3: int
    n_2: int
    n_1: int
    n_u: int

    def __post_init__(self) -> None:
        for name, value in self.as_dict().items():
            if value < 0:
                raise CalibrationError(f"{name}={value} is negative")

    @property
    def total(self) -> int:
        return self.n_4 + self.n_3 + self.n_2 + self.n_1 + self.n_u

    def as_dict(self) -> dict[str, int]:
        return {
            "n_4": self.n_4,
            "n_3": self.n_3,
            "n_2": self.n_2,
            "n_1": self.n_1,
            "n_u": self.n_u,
        }


@dataclass(frozen=True)
class BoundaryEstimate:
    """A boundary score with its feasible interval; lo == hi == point when no
    papers are missing."""

    lo: float
    hi: float
    point: float

    def __post_init__(self) -> None:
        if not self.lo <= self.point <= self.hi:
            raise CalibrationError(
                f"boundary estimate disordered: lo={self.lo} point={self.point} "
                f"hi={self.hi}"
            )

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi


@dataclass(frozen=True)
class BoundarySet:
    """The three calibrated grade cuts, plus the optional U/1* cut."""

    b12: BoundaryEstimate
    b23: BoundaryEstimate
    b34: BoundaryEstimate
    b_u1: Optional[BoundaryEstimate] = None

    def __post_init__(self) -> None:
        # Strict ordering holds whenever every interior grade bin is occupied;
        # an empty bin legitimately collapses two cuts onto the same value.
        if not self.b12.point <= self.b23.point <= self.b34.point:
            raise CalibrationError(
                "boundary points disordered: "
                f"{self.b12.point}, {self.b23.point}, {self.b34.point}"
            )

    @property
    def strictly_ordered(self) -> bool:
        return self.b12.point < self.b23.point < self.b34.point

    def named(self) -> dict[str, BoundaryEstimate]:
        out = {"b12": self.b12, "b23": self.b23, "b34": self.b34}
        if self.b_u1 is not None:
            out["bU1"] = self.b_u1
        return out


def reference_boundaries() -> BoundarySet:
    """The published overall boundary set as degenerate point estimates."""

    def est(value: float) -> BoundaryEstimate:
        return BoundaryEstimate(lo=value, hi=value, point=value)

    return BoundarySet(
        b12=est(REFERENCE_B12), b23=est(REFERENCE_B23), b34=est(REFERENCE_B34)
    )


def profile_to_counts(profile: GradeProfile, n: int) -> GradeCounts:
    """Apportion a rounded percentage profile over ``n`` papers.

    Largest-remainder apportionment guarantees the counts sum to ``n``;
    remainder ties go to the higher grade first.
    """
    if n < 1:
        raise CalibrationError(f"cannot apportion over n={n}")
    shares = [profile.pct_4, profile.pct_3, profile.pct_2, profile.pct_1, profile.pct_u]
    total = sum(shares)
    quotas = [share * n / total for share in shares]
    counts = [math.floor(q) for q in quotas]
    leftover = n - sum(counts)
    by_remainder = sorted(range(5), key=lambda i: (counts[i] - quotas[i], i))
    for i in by_remainder[:leftover]:
        counts[i] += 1
    return GradeCounts(*counts)


def _cut_value(scores_desc: Sequence[float], j: int) -> float:
    """Boundary score for a cut after the top ``j`` of the available papers.

    Interior cuts take the midpoint of the two adjacent scores.  A cut outside
    the observed range extends beyond the extreme score by half the mean
    adjacent gap, clamped to the 0-100 scale.
    """
    a = len(scores_desc)
    if 0 < j < a:
        return (scores_desc[j - 1] + scores_desc[j]) / 2.0
    if a >= 2:
        half_gap = (scores_desc[0] - scores_desc[-1]) / (a - 1) / 2.0
    else:
        half_gap = _SINGLE_SCORE_HALF_GAP
    if j == 0:
        return min(100.0, scores_desc[0] + half_gap)
    return max(0.0, scores_desc[-1] - half_gap)


def cut_interval(scores_desc: Sequence[float], k: int, m_missing: int) -> BoundaryEstimate:
    """Feasible boundary interval for a cut after the top ``k`` of all N papers.

    ``scores_desc`` holds only the available papers; ``m_missing`` papers have
    unknown scores.  The number of missing papers above the cut can range over
    every placement consistent with the rank arithmetic, and each placement
    pins the cut between a different pair of available scores.
    """
    a = len(scores_desc)
    if a == 0:
        raise CalibrationError("cannot place a cut with no available scores")
    if m_missing < 0:
        raise CalibrationError(f"negative missing count: {m_missing}")
    n = a + m_missing
    if not 0 <= k <= n:
        raise CalibrationError(f"cut rank {k} outside [0, {n}]")
    j_lo = max(0, k - m_missing)
    j_hi = min(k, a)
    values = [_cut_value(scores_desc, j) for j in range(j_lo, j_hi + 1)]
    lo, hi = min(values), max(values)
    return BoundaryEstimate(lo=lo, hi=hi, point=(lo + hi) / 2.0)


def infer_boundaries(
    scores_desc: Sequence[float], counts: GradeCounts, m_missing: int = 0
) -> BoundarySet:
    """Infer the grade cuts that reproduce ``counts`` over the ranked scores.

    ``scores_desc`` must be sorted descending (ties pre-broken by record id so
    the ranking is deterministic); ``len(scores_desc) + m_missing`` must equal
    the profile total.  The U/1* cut is inferred only when the profile has a
    nonzero unclassified share.
    """
    scores = list(scores_desc)
    for earlier, later in zip(scores, scores[1:]):
        if earlier < later:
            raise CalibrationError("scores must be sorted descending")
    if len(scores) + m_missing != counts.total:
        raise CalibrationError(
            f"{len(scores)} scores + {m_missing} missing != profile total "
            f"{counts.total}"
        )
    k34 = counts.n_4
    k23 = k34 + counts.n_3
    k12 = k23 + counts.n_2
    b_u1 = None
    if counts.n_u > 0:
        b_u1 = cut_interval(scores, counts.total - counts.n_u, m_missing)
    return BoundarySet(
        b12=cut_interval(scores, k12, m_missing),
        b23=cut_interval(scores, k23, m_missing),
        b34=cut_interval(scores, k34, m_missing),
        b_u1=b_u1,
    )


@dataclass(frozen=True)
class Eligibility:
    """Whether an institution's boundary set enters the overall aggregation."""

    eligible: bool
    reason: Optional[str] = None


REASON_AVAILABILITY = "availability"
REASON_SPANS_BANDS = "interval spans bands"


def check_eligibility(
    boundaries: BoundarySet, availability: float, min_availability: float = 0.9
) -> Eligibility:
    """Exclude submissions with too much missing data.

    A submission is dropped when too few of its declared outputs were scored,
    or when any boundary's feasible interval reaches across another boundary's
    point — the cut could then sit in more than one grade band.
    """
    if availability < min_availability:
        return Eligibility(False, REASON_AVAILABILITY)
    estimates = list(boundaries.named().values())
    for interval in estimates:
        for other in estimates:
            if other is interval:
                continue
            if interval.contains(other.point):
                return Eligibility(False, REASON_SPANS_BANDS)
    return Eligibility(True)


def aggregate_boundaries(per_institution: Sequence[BoundarySet]) -> BoundarySet:
    """Combine eligible institutions into one overall boundary set.

    Each overall point is the unweighted mean of the per-institution points;
    lo/hi record the min/max point seen across institutions.  The U/1* cut is
    institution-specific and never aggregated.
    """
    if not per_institution:
        raise CalibrationError("no eligible boundary sets to aggregate")

    def combine(points: list[float]) -> BoundaryEstimate:
        return BoundaryEstimate(lo=min(points), hi=max(points), point=mean(points))

    return BoundarySet(
        b12=combine([b.b12.point for b in per_institution]),
        b23=combine([b.b23.point for b in per_institution]),
        b34=combine([b.b34.point for b in per_institution]),
    )


def assign_star(score: float, boundaries: BoundarySet) -> StarGrade:
    """Grade a 0-100 score against boundary points; a boundary value itself
    maps to the higher grade."""
    if score >= boundaries.b34.point:
        return StarGrade.FOUR
    if score >= boundaries.b23.point:
        return StarGrade.THREE
    if score >= boundaries.b12.point:
        return StarGrade.TWO
    if boundaries.b_u1 is not None and score < boundaries.b_u1.point:
        return StarGrade.U
    return StarGrade.ONE


@dataclass(frozen=True)
class ProfileProjection:
    """Projected grade profile with its funding-relevant summaries."""

    profile: GradeProfile
    gpa: float
    qr_share: float


def project_profile(
    scores: Sequence[float], boundaries: BoundarySet
) -> ProfileProjection:
    """Grade every score and report the resulting percentage profile, the
    0-4 grade-point average, and the share of 3*/4* outputs that attracts
    QR funding."""
    if not scores:
        raise CalibrationError("cannot project a profile from no scores")
    tally = {grade: 0 for grade in StarGrade}
    for score in scores:
        tally[assign_star(score, boundaries)] += 1
    n = len(scores)
    pct = {grade: 100.0 * count / n for grade, count in tally.items()}
    profile = GradeProfile(
        pct_4=pct[StarGrade.FOUR],
        pct_3=pct[StarGrade.THREE],
        pct_2=pct[StarGrade.TWO],
        pct_1=pct[StarGrade.ONE],
        pct_u=pct[StarGrade.U],
    )
    gpa = (
        4 * profile.pct_4 + 3 * profile.pct_3 + 2 * profile.pct_2 + 1 * profile.pct_1
    ) / 100.0
    return ProfileProjection(
        profile=profile, gpa=gpa, qr_share=profile.pct_4 + profile.pct_3
    )
