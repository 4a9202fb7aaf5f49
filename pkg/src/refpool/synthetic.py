"""Deterministic demo corpus with known calibration outcomes.

Builds a results sheet plus drop-in documents, then works backwards:
documents are scored with the offline backend first, and each
institution's reported profile is chosen so the inferred grade cuts land
inside realistic windows (tight around the funding line, wider at the
top).  Two institutions are under-supplied with documents to trip the
availability rule and one is built with an empty 3* band so its cut
interval spans bands.  Everything is a pure function of the seed.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass, field
from pathlib import Path

from .backends import MockBackend
from .calibration import (
    GradeCounts,
    GradeProfile,
    check_eligibility,
    infer_boundaries,
    profile_to_counts,
)
from .corpus import JOURNAL, OTHER, SubmissionSet, ingest_results_sheet
from .prompts import PromptPair
from .scorer import ScorerConfig, score_batch

UOA = "17"

# Boundary windows the eligible institutions are steered into.  The 2*/3*
# window is kept deliberately narrow so its cross-institution spread ends
# up visibly smaller than the 3*/4* one.
B12_WINDOW = (46.5, 52.8)
B23_WINDOW = (56.8, 62.2)
B34_WINDOW = (64.5, 75.5)

_WORDS = (
    "market firm panel survey evidence policy model estimate governance "
    "capital labour productivity innovation merger audit risk supply chain "
    "consumer behaviour strategy performance incentive contract equilibrium "
    "regression cohort longitudinal qualitative interview dataset robustness "
    "heterogeneity elasticity welfare intervention disclosure sentiment"
).split()


@dataclass
class InstitutionPlan:
    name: str
    role: str  # "eligible" | "availability" | "span"
    n_journal: int
    n_other: int = 0
    n_missing_docs: int = 0  # journal records left without a document
    n_unclassified: int = 0

    @property
    def declared_total(self) -> int:
        return self.n_journal + self.n_other


@dataclass
class CorpusSpec:
    root: Path
    sheet: Path
    docs_dir: Path
    seed: int
    plans: list[InstitutionPlan]
    duplicate_pairs: int
    config: ScorerConfig
    prompts: PromptPair = field(default_factory=PromptPair)

    def plan(self, role: str) -> list[InstitutionPlan]:
        return [p for p in self.plans if p.role == role]


def default_plans() -> list[InstitutionPlan]:
    plans = []
    for i in range(11):
        plans.append(
            InstitutionPlan(
                name=f"Inst-{i + 1:02d}",
                role="eligible",
                n_journal=34 + (i * 3) % 9,
                n_other=2 if i == 2 else 0,
                n_unclassified=2 if i == 5 else 0,
            )
        )
    plans.append(
        InstitutionPlan(name="Inst-12", role="availability", n_journal=40, n_missing_docs=10)
    )
    plans.append(
        InstitutionPlan(name="Inst-13", role="availability", n_journal=36, n_missing_docs=6)
    )
    plans.append(
        InstitutionPlan(name="Inst-14", role="span", n_journal=40, n_missing_docs=2)
    )
    return plans


def _doc_text(rng: random.Random, token: str) -> str:
    words = [f"Working paper {token}."]
    for _ in range(560):
        words.append(rng.choice(_WORDS))
        if rng.random() < 0.08:
            words[-1] += "."
    return " ".join(words)


def _pick_cut(scores: list[float], m: int, valid_ks, target: float, window) -> list[int]:
    """Candidate cut positions ranked by how close the inferred point
    lands to the target, keeping only in-window points."""
    ranked = []
    for k in valid_ks:
        point = infer_point(scores, k, m)
        if window[0] <= point <= window[1]:
            ranked.append((abs(point - target), k))
    ranked.sort()
    return [k for _, k in ranked[:6]]


def infer_point(scores: list[float], k: int, m: int) -> float:
    from .calibration import cut_interval

    return cut_interval(scores, k, m).point


def _choose_counts(
    scores: list[float],
    declared_total: int,
    m: int,
    rng: random.Random,
    plan: InstitutionPlan,
) -> GradeCounts:
    a = len(scores)
    n_u = plan.n_unclassified
    span = plan.role == "span"
    t34 = rng.gauss(69.5, 2.4)
    t23 = rng.gauss(58.9, 0.9)
    t12 = rng.gauss(49.6, 1.5)
    ks34 = _pick_cut(scores, m, range(2, a - 8), t34, B34_WINDOW)
    ks23 = _pick_cut(scores, m, range(3, a - 5), t23, B23_WINDOW)
    ks12 = _pick_cut(scores, m, range(4, a - 2), t12, B12_WINDOW)
    for k34 in ks34:
        k23_options = [k34] if span else [k for k in ks23 if k > k34 + 1]
        for k23 in k23_options:
            for k12 in [k for k in ks12 if k > k23 + 1]:
                n1 = declared_total - k12 - n_u
                if n1 < 1:
                    continue
                counts = GradeCounts(k34, k23 - k34, k12 - k23, n1, n_u)
                bounds = infer_boundaries(scores, counts, m)
                verdict = check_eligibility(bounds, 1.0)
                if span != (not verdict.eligible):
                    continue
                if not span and not (
                    B12_WINDOW[0] <= bounds.b12.point <= B12_WINDOW[1]
                    and B23_WINDOW[0] <= bounds.b23.point <= B23_WINDOW[1]
                    and B34_WINDOW[0] <= bounds.b34.point <= B34_WINDOW[1]
                ):
                    continue
                profile = _to_profile(counts, declared_total)
                if profile_to_counts(profile, declared_total) != counts:
                    continue
                return counts
    raise RuntimeError(f"{plan.name}: no workable grade counts for this seed")


def _to_profile(counts: GradeCounts, n: int) -> GradeProfile:
    return GradeProfile(
        pct_4=round(100.0 * counts.n_4 / n, 2),
        pct_3=round(100.0 * counts.n_3 / n, 2),
        pct_2=round(100.0 * counts.n_2 / n, 2),
        pct_1=round(100.0 * counts.n_1 / n, 2),
        pct_u=round(100.0 * counts.n_u / n, 2),
    )


def build_corpus(
    root: str | Path,
    seed: int = 11,
    plans: list[InstitutionPlan] | None = None,
    duplicate_pairs: int = 9,
) -> CorpusSpec:
    """Write sheet.csv and docs/ under root; return what was built."""
    root = Path(root)
    docs_dir = root / "docs"
    docs_dir.mkdir(parents=True, exist_ok=True)
    sheet = root / "sheet.csv"
    plans = plans or default_plans()
    rng = random.Random(f"corpus:{seed}")
    config = ScorerConfig(
        temperature=0.2, samples_per_paper=5, max_in_flight=8, retry_base_delay=0.001
    )
    prompts = PromptPair()

    # Shared outputs: consecutive institutions submit the same document
    # under the same DOI, giving the duplicate analysis real material.
    dup_doi = lambda p: f"10.5555/dup.{p:03d}"
    dup_text = {p: _doc_text(rng, f"dup-{p}") for p in range(duplicate_pairs)}
    dup_members: dict[tuple[str, int], int] = {}
    for p in range(duplicate_pairs):
        first = p % 11
        second = (p + 1) % 11
        dup_members[(plans[first].name, p)] = p
        dup_members[(plans[second].name, p)] = p

    texts: dict[tuple[str, int], str] = {}  # (institution, ordinal) -> text
    rows: list[list[str]] = []
    for plan in plans:
        ordinal = 0
        my_dups = sorted(p for (name, p) in dup_members if name == plan.name)
        for j in range(plan.n_journal):
            if j < len(my_dups):
                pair = my_dups[j]
                doi = dup_doi(pair)
                text = dup_text[pair]
            else:
                doi = f"10.5555/{plan.name.lower()}.{j:03d}"
                text = _doc_text(rng, f"{plan.name}-{j}")
            texts[(plan.name, ordinal)] = text
            rows.append([plan.name, UOA, doi, JOURNAL])
            ordinal += 1
        for j in range(plan.n_other):
            rows.append([plan.name, UOA, "", OTHER])
            ordinal += 1

    # First pass with placeholder profiles: fixes record ids so documents
    # can be scored before the real profiles are chosen.
    _write_sheet(sheet, rows, {p.name: (GradeProfile(25, 25, 25, 25, 0), p.declared_total) for p in plans})
    sets = {s.institution_id: s for s in ingest_results_sheet(sheet, UOA).sets}

    jobs = []
    doc_of: dict[str, str] = {}
    for plan in plans:
        submission = sets[plan.name]
        journal_records = [r for r in submission.records if r.output_kind == JOURNAL]
        for ordinal, record in enumerate(journal_records):
            text = texts[(plan.name, ordinal)]
            doc_of[record.record_id] = text
            if ordinal >= plan.n_journal - plan.n_missing_docs:
                continue  # engineered gap: no document provided
            (docs_dir / f"{record.record_id}.txt").write_text(text)
            jobs.append((record.record_id, text))

    backend = MockBackend(seed=seed)
    scored = score_batch(jobs, prompts, config, backend)

    profiles: dict[str, tuple[GradeProfile, int]] = {}
    for plan in plans:
        submission = sets[plan.name]
        journal_records = [r for r in submission.records if r.output_kind == JOURNAL]
        available = [
            r.record_id
            for ordinal, r in enumerate(journal_records)
            if ordinal < plan.n_journal - plan.n_missing_docs
        ]
        means = sorted(
            (round(scored[rid].overall_mean, 2) for rid in available), reverse=True
        )
        m = plan.declared_total - len(means)
        counts = _choose_counts(means, plan.declared_total, m, rng, plan)
        profiles[plan.name] = (_to_profile(counts, plan.declared_total), plan.declared_total)

    _write_sheet(sheet, rows, profiles)
    return CorpusSpec(
        root=root,
        sheet=sheet,
        docs_dir=docs_dir,
        seed=seed,
        plans=plans,
        duplicate_pairs=duplicate_pairs,
        config=config,
        prompts=prompts,
    )


def _write_sheet(
    path: Path, rows: list[list[str]], profiles: dict[str, tuple[GradeProfile, int]]
) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["institution", "uoa", "doi", "output_type",
             "pct_4", "pct_3", "pct_2", "pct_1", "pct_u", "declared_total"]
        )
        for inst, uoa, doi, kind in rows:
            profile, declared = profiles[inst]
            writer.writerow(
                [inst, uoa, doi, kind,
                 profile.pct_4, profile.pct_3, profile.pct_2, profile.pct_1,
                 profile.pct_u, declared]
            )


def main(argv: list[str] | None = None) -> int:
    import argparse

    parser = argparse.ArgumentParser(description="build the demo corpus")
    parser.add_argument("out_dir")
    parser.add_argument("--seed", type=int, default=11)
    args = parser.parse_args(argv)
    spec = build_corpus(args.out_dir, seed=args.seed)
    print(f"sheet: {spec.sheet}")
    print(f"docs:  {spec.docs_dir} ({len(list(spec.docs_dir.iterdir()))} files)")
    return 0


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
