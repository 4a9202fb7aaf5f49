"""Results-sheet ingestion, record bookkeeping, and anonymization."""

from __future__ import annotations

import csv
import hashlib
import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

from .calibration import GradeProfile

JOURNAL = "journal-article"
OTHER = "other"

# Lifecycle of a record's document: unresolved until the DOI lookup runs,
# pending once an open-access location is known but not yet fetched.
AVAILABLE = "available"
PENDING = "pending"
PAYWALLED = "paywalled"
UNRESOLVED = "unresolved"
_STATES = (AVAILABLE, PENDING, PAYWALLED, UNRESOLVED)

_DOI_PATTERN = re.compile(r"^10\.\d{4,9}/\S+$")
_DOI_PREFIXES = (
    "https://doi.org/",
    "http://doi.org/",
    "https://dx.doi.org/",
    "http://dx.doi.org/",
    "doi:",
)

SHEET_COLUMNS = (
    "institution",
    "uoa",
    "doi",
    "output_type",
    "pct_4",
    "pct_3",
    "pct_2",
    "pct_1",
    "pct_u",
    "declared_total",
)

MANIFEST_COLUMNS = (
    "record_id",
    "institution_id",
    "uoa",
    "doi",
    "output_kind",
    "title_digest",
    "source_url",
    "availability",
    "document_ref",
)


class CorpusError(ValueError):
    pass


def normalize_doi(raw: str) -> str:
    """Canonical lowercase DOI with resolver prefixes stripped."""
    doi = raw.strip()
    lowered = doi.lower()
    for prefix in _DOI_PREFIXES:
        if lowered.startswith(prefix):
            doi = doi[len(prefix):]
            lowered = doi.lower()
    doi = doi.strip().lower()
    if not _DOI_PATTERN.match(doi):
        raise CorpusError(f"not a DOI: {raw!r}")
    return doi


def title_digest(title: str) -> str:
    """One-way digest for duplicate matching without exposing the title."""
    canon = " ".join(title.lower().split())
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class OutputRecord:
    record_id: str
    institution_id: str
    uoa: str
    doi: str = ""
    output_kind: str = JOURNAL
    title_digest: str = ""
    source_url: str = ""
    availability: str = UNRESOLVED
    document_ref: str = ""

    def __post_init__(self) -> None:
        if self.availability not in _STATES:
            raise CorpusError(f"unknown availability state: {self.availability}")
        if (self.availability == AVAILABLE) != bool(self.document_ref):
            raise CorpusError(
                f"{self.record_id}: availability={self.availability} "
                f"inconsistent with document_ref={self.document_ref!r}"
            )
        if self.doi and not _DOI_PATTERN.match(self.doi):
            raise CorpusError(f"{self.record_id}: malformed doi {self.doi!r}")


@dataclass(frozen=True)
class SubmissionSet:
    institution_id: str
    uoa: str
    records: tuple[OutputRecord, ...]
    reported_profile: GradeProfile
    declared_total: int

    def __post_init__(self) -> None:
        if self.declared_total < len(self.records):
            raise CorpusError(
                f"{self.institution_id}: {len(self.records)} records exceed "
                f"declared total {self.declared_total}"
            )
        for record in self.records:
            if (record.institution_id, record.uoa) != (self.institution_id, self.uoa):
                raise CorpusError(f"{record.record_id}: wrong submission set")

    def with_records(self, records: Iterable[OutputRecord]) -> SubmissionSet:
        return replace(self, records=tuple(records))


def availability_ratio(submission: SubmissionSet) -> float:
    """Share of the declared return that is fetched journal full text."""
    if submission.declared_total <= 0:
        raise CorpusError(f"{submission.institution_id}: declared_total must be positive")
    have = sum(
        1
        for r in submission.records
        if r.availability == AVAILABLE and r.output_kind == JOURNAL
    )
    return have / submission.declared_total


@dataclass
class IngestResult:
    sets: list[SubmissionSet] = field(default_factory=list)
    row_errors: list[str] = field(default_factory=list)


def _parse_profile(row: dict, where: str) -> GradeProfile:
    values = []
    for column in ("pct_4", "pct_3", "pct_2", "pct_1", "pct_u"):
        raw = row[column].strip()
        try:
            value = float(raw)
        except ValueError:
            raise CorpusError(f"{where}: bad percentage {column}={raw!r}") from None
        values.append(value)
    try:
        return GradeProfile(*values)
    except ValueError as exc:
        raise CorpusError(f"{where}: {exc}") from None


def ingest_results_sheet(path: str | Path, uoa: str) -> IngestResult:
    """Read a results sheet and group its rows into per-institution sets.

    Rows for other units of assessment are ignored.  Rows that fail
    validation are skipped and reported in row_errors; a structurally
    unusable sheet (missing columns) raises instead.
    """
    result = IngestResult()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in SHEET_COLUMNS if c not in header]
        if missing:
            raise CorpusError(f"results sheet missing column(s): {', '.join(missing)}")
        has_title = "title" in header

        order: list[str] = []
        rows_by_inst: dict[str, list[dict]] = {}
        for line_no, row in enumerate(reader, start=2):
            if row["uoa"].strip() != uoa:
                continue
            inst = row["institution"].strip()
            if not inst:
                result.row_errors.append(f"line {line_no}: empty institution")
                continue
            if inst not in rows_by_inst:
                order.append(inst)
                rows_by_inst[inst] = []
            row["_line"] = line_no
            rows_by_inst[inst].append(row)

    for inst in order:
        rows = rows_by_inst[inst]
        profile: GradeProfile | None = None
        declared_total = 0
        records: list[OutputRecord] = []
        ordinal = 0
        for row in rows:
            where = f"line {row['_line']} ({inst})"
            try:
                row_profile = _parse_profile(row, where)
                row_declared = int(row["declared_total"])
                if profile is None:
                    # The profile columns repeat on every row; the first
                    # clean row fixes the institution's values.
                    profile, declared_total = row_profile, row_declared
                elif row_profile != profile or row_declared != declared_total:
                    raise CorpusError(f"{where}: profile disagrees with institution's first row")
                doi = ""
                if row["doi"].strip():
                    doi = normalize_doi(row["doi"])
                kind = JOURNAL if row["output_type"].strip() == JOURNAL else OTHER
                digest = title_digest(row["title"]) if has_title and row.get("title") else ""
                seed = f"{inst}|{uoa}|{ordinal}|{doi}"
                record_id = "rec-" + hashlib.sha1(seed.encode()).hexdigest()[:12]
                records.append(
                    OutputRecord(
                        record_id=record_id,
                        institution_id=inst,
                        uoa=uoa,
                        doi=doi,
                        output_kind=kind,
                        title_digest=digest,
                    )
                )
                ordinal += 1
            except (CorpusError, ValueError) as exc:
                result.row_errors.append(str(exc))

        if profile is None:
            result.row_errors.append(f"{inst}: no usable rows")
            continue
        try:
            result.sets.append(
                SubmissionSet(
                    institution_id=inst,
                    uoa=uoa,
                    records=tuple(records),
                    reported_profile=profile,
                    declared_total=declared_total,
                )
            )
        except CorpusError as exc:
            result.row_errors.append(str(exc))
    return result


# ── anonymization ────────────────────────────────────────────────────


def institution_label(index: int) -> str:
    """0 -> 'University A', 25 -> 'University Z', 26 -> 'University AA'."""
    if index < 0:
        raise CorpusError("label index must be non-negative")
    letters = ""
    n = index + 1
    while n:
        n, rem = divmod(n - 1, 26)
        letters = chr(ord("A") + rem) + letters
    return f"University {letters}"


@dataclass(frozen=True)
class AnonymizationMap:
    institutions: dict[str, str]
    records: dict[str, str]

    def save(self, path: str | Path) -> None:
        # Kept in its own file on purpose: exports carry only the labels,
        # so results alone cannot be traced back to institutions.
        payload = {"institutions": self.institutions, "records": self.records}
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> AnonymizationMap:
        payload = json.loads(Path(path).read_text())
        return cls(institutions=payload["institutions"], records=payload["records"])


def anonymize(sets: list[SubmissionSet]) -> AnonymizationMap:
    """Deterministic label map in ingest order: institutions then papers."""
    institutions: dict[str, str] = {}
    records: dict[str, str] = {}
    for submission in sets:
        if submission.institution_id not in institutions:
            institutions[submission.institution_id] = institution_label(len(institutions))
        for n, record in enumerate(submission.records, start=1):
            records[record.record_id] = f"Paper {n}"
    return AnonymizationMap(institutions=institutions, records=records)


# ── manifest I/O ─────────────────────────────────────────────────────


def write_manifest(sets: list[SubmissionSet], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_COLUMNS)
        for submission in sets:
            for r in submission.records:
                writer.writerow(
                    [
                        r.record_id,
                        r.institution_id,
                        r.uoa,
                        r.doi,
                        r.output_kind,
                        r.title_digest,
                        r.source_url,
                        r.availability,
                        r.document_ref,
                    ]
                )


def write_institutions(sets: list[SubmissionSet], path: str | Path) -> None:
    """Companion table carrying what manifest rows cannot: the reported
    profile and declared size of each return."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["institution_id", "uoa", "pct_4", "pct_3", "pct_2", "pct_1", "pct_u", "declared_total"]
        )
        for s in sets:
            p = s.reported_profile
            writer.writerow(
                [s.institution_id, s.uoa, p.pct_4, p.pct_3, p.pct_2, p.pct_1, p.pct_u, s.declared_total]
            )


def read_corpus(manifest_path: str | Path, institutions_path: str | Path) -> list[SubmissionSet]:
    profiles: dict[str, tuple[GradeProfile, int, str]] = {}
    order: list[str] = []
    with open(institutions_path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            inst = row["institution_id"]
            order.append(inst)
            profiles[inst] = (
                GradeProfile(
                    float(row["pct_4"]),
                    float(row["pct_3"]),
                    float(row["pct_2"]),
                    float(row["pct_1"]),
                    float(row["pct_u"]),
                ),
                int(row["declared_total"]),
                row["uoa"],
            )
    records: dict[str, list[OutputRecord]] = {inst: [] for inst in order}
    with open(manifest_path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            inst = row["institution_id"]
            if inst not in records:
                raise CorpusError(f"manifest references unknown institution {inst!r}")
            records[inst].append(
                OutputRecord(
                    record_id=row["record_id"],
                    institution_id=inst,
                    uoa=row["uoa"],
                    doi=row["doi"],
                    output_kind=row["output_kind"],
                    title_digest=row["title_digest"],
                    source_url=row["source_url"],
                    availability=row["availability"],
                    document_ref=row["document_ref"],
                )
            )
    sets = []
    for inst in order:
        profile, declared_total, uoa = profiles[inst]
        sets.append(
            SubmissionSet(
                institution_id=inst,
                uoa=uoa,
                records=tuple(records[inst]),
                reported_profile=profile,
                declared_total=declared_total,
            )
        )
    return sets
