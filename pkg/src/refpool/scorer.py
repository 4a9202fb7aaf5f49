"""Repeated-sample scoring of papers with retries and audit logging."""

from __future__ import annotations

import json
import math
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .backends import Backend, BackendError, ChatRequest, compose_request
from .parser import CRITERIA, CriterionTriple, ResponseParseError, parse_response
from .prompts import PromptPair


class ScoringError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScorerConfig:
    temperature: float = 0.2
    samples_per_paper: int = 5
    max_retries: int = 3
    max_in_flight: int = 4
    model_id: str = "mock-scorer"
    # Backoff starts here and doubles per attempt; tests shrink it so a
    # scripted flaky backend cannot stretch the suite.
    retry_base_delay: float = 0.5

    def __post_init__(self) -> None:
        if self.samples_per_paper < 1:
            raise ValueError("samples_per_paper must be at least 1")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be within [0, 2]")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be at least 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be non-negative")


@dataclass(frozen=True)
class ScoreSample:
    """One accepted response for one sample slot."""

    triple: CriterionTriple
    overall: float
    raw_response: str
    attempts: int

    def __post_init__(self) -> None:
        if abs(self.overall - self.triple.overall) > 1e-9:
            raise ValueError("overall must be the mean of the three criteria")

    @classmethod
    def from_triple(cls, triple: CriterionTriple, raw: str, attempts: int) -> ScoreSample:
        return cls(triple=triple, overall=triple.overall, raw_response=raw, attempts=attempts)


@dataclass(frozen=True)
class PaperScore:
    """Aggregate statistics for one paper over its accepted samples."""

    record_id: str
    samples: tuple[ScoreSample, ...]
    failed: bool = False
    failure_reason: str = ""

    def __post_init__(self) -> None:
        if self.samples and not (
            self.overall_min - 1e-9 <= self.overall_mean <= self.overall_max + 1e-9
        ):
            raise ValueError("sample aggregates out of order")

    @property
    def sample_count(self) -> int:
        return len(self.samples)

    @property
    def overall_mean(self) -> float:
        if not self.samples:
            return math.nan
        return sum(s.overall for s in self.samples) / len(self.samples)

    @property
    def overall_min(self) -> float:
        return min((s.overall for s in self.samples), default=math.nan)

    @property
    def overall_max(self) -> float:
        return max((s.overall for s in self.samples), default=math.nan)

    @property
    def variation(self) -> float:
        """Spread between the strongest and weakest sample."""
        if not self.samples:
            return math.nan
        return self.overall_max - self.overall_min

    def criterion_mean(self, criterion: str) -> float:
        if not self.samples:
            return math.nan
        return sum(s.triple.score(criterion) for s in self.samples) / len(self.samples)

    def critical_comment(self, criterion: str) -> str:
        """Explanation attached to the weakest sample for the criterion."""
        if not self.samples:
            return ""
        worst = min(self.samples, key=lambda s: s.triple.score(criterion))
        return worst.triple.note(criterion)

    def critical_comments(self) -> dict[str, str]:
        return {c: self.critical_comment(c) for c in CRITERIA}


AuditSink = Callable[[str], None]


@dataclass
class _Budget:
    """Shared retry/backoff state, mutated under its own lock."""

    config: ScorerConfig
    rng: random.Random = field(default_factory=lambda: random.Random(0xB0FF))
    lock: threading.Lock = field(default_factory=threading.Lock)

    def delay(self, attempt: int) -> float:
        with self.lock:
            jitter = 0.5 + self.rng.random() / 2.0
        return self.config.retry_base_delay * (2 ** (attempt - 1)) * jitter


def _collect_sample(
    record_id: str,
    document_text: str,
    slot: int,
    prompts: PromptPair,
    config: ScorerConfig,
    backend: Backend,
    budget: _Budget,
    audit: AuditSink | None,
    audit_lock: threading.Lock,
) -> ScoreSample:
    last_error: Exception | None = None
    for attempt in range(1, config.max_retries + 2):
        # Each attempt is a fresh, isolated request.
        request: ChatRequest = compose_request(document_text, prompts, config)
        tag = f"{record_id}:{slot}" if attempt == 1 else f"{record_id}:{slot}:r{attempt - 1}"
        try:
            raw = backend.complete(request, tag)
            triple = parse_response(raw)
        except (BackendError, ResponseParseError) as exc:
            last_error = exc
            if attempt <= config.max_retries:
                time.sleep(budget.delay(attempt))
            continue
        if audit is not None:
            line = json.dumps(
                {"record_id": record_id, "slot": slot, "attempts": attempt, "response": raw}
            )
            with audit_lock:
                audit(line)
        return ScoreSample.from_triple(triple, raw, attempt)
    raise ScoringError(
        f"{record_id} sample {slot} exhausted {config.max_retries + 1} attempts: {last_error}"
    )


def score_paper(
    record_id: str,
    document_text: str,
    prompts: PromptPair,
    config: ScorerConfig,
    backend: Backend,
    audit: AuditSink | None = None,
) -> PaperScore:
    """Score one paper: K independent samples, each retried on failure."""
    scores = score_batch([(record_id, document_text)], prompts, config, backend, audit)
    return scores[record_id]


def score_batch(
    papers: Iterable[tuple[str, str]],
    prompts: PromptPair,
    config: ScorerConfig,
    backend: Backend,
    audit: AuditSink | None = None,
) -> dict[str, PaperScore]:
    """Score many papers concurrently.

    Work fans out per sample slot up to max_in_flight.  The result is a
    deterministic reduction in slot order, so completion order never
    changes a PaperScore.  A slot that exhausts its retries marks the
    paper failed; its other slots are kept, never averaged quietly.
    """
    jobs = list(papers)
    seen = [rid for rid, _ in jobs]
    if len(set(seen)) != len(seen):
        raise ScoringError("duplicate record ids in one scoring batch")
    budget = _Budget(config=config)
    audit_lock = threading.Lock()
    results: dict[str, dict[int, ScoreSample]] = {rid: {} for rid, _ in jobs}
    failures: dict[str, str] = {}
    failure_lock = threading.Lock()

    def run(rid: str, text: str, slot: int) -> None:
        try:
            sample = _collect_sample(
                rid, text, slot, prompts, config, backend, budget, audit, audit_lock
            )
        except ScoringError as exc:
            with failure_lock:
                failures.setdefault(rid, str(exc))
            return
        results[rid][slot] = sample

    with ThreadPoolExecutor(max_workers=config.max_in_flight) as pool:
        futures = [
            pool.submit(run, rid, text, slot)
            for rid, text in jobs
            for slot in range(config.samples_per_paper)
        ]
        for future in futures:
            future.result()

    out: dict[str, PaperScore] = {}
    for rid, _ in jobs:
        ordered = tuple(results[rid][slot] for slot in sorted(results[rid]))
        out[rid] = PaperScore(
            record_id=rid,
            samples=ordered,
            failed=rid in failures,
            failure_reason=failures.get(rid, ""),
        )
    return out
