"""Scorer behaviour: sampling, retries, concurrency caps, mock statistics."""

from __future__ import annotations

import threading
import time

import pytest

from refpool.backends import BackendError, ChatRequest, MockBackend, compose_request
from refpool.parser import CriterionTriple, format_triple
from refpool.prompts import PromptPair
from refpool.scorer import (
    PaperScore,
    ScoreSample,
    ScorerConfig,
    ScoringError,
    score_batch,
    score_paper,
)

PROMPTS = PromptPair()


def fast_config(**kw) -> ScorerConfig:
    base = dict(retry_base_delay=0.001, max_retries=3, max_in_flight=4)
    base.update(kw)
    return ScorerConfig(**base)


def make_response(overall: float, note: str = "n") -> str:
    return format_triple(
        CriterionTriple(overall, overall, overall, note, note, note)
    )


class ScriptedBackend:
    """Maps tag -> response text or an exception instance; thread safe."""

    def __init__(self, script):
        self.script = script
        self.calls: list[str] = []
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest, tag: str = "") -> str:
        with self._lock:
            self.calls.append(tag)
        try:
            out = self.script[tag]
        except KeyError:
            raise AssertionError(f"unscripted tag {tag!r}")
        if isinstance(out, Exception):
            raise out
        return out


# ── compose_request ──────────────────────────────────────────────────


def test_compose_request_layout():
    req = compose_request("abc", PROMPTS, fast_config())
    messages = req.messages()
    assert len(messages) == 2
    assert messages[0]["role"] == "system"
    assert messages[0]["content"] == PROMPTS.system_text
    assert messages[1]["role"] == "user"
    assert messages[1]["content"].endswith("abc")
    assert messages[1]["content"].startswith(PROMPTS.user_preamble)


def test_compose_request_rejects_empty_document():
    with pytest.raises(ValueError, match="document yielded no text"):
        compose_request("   \n ", PROMPTS, fast_config())


def test_compose_request_fresh_each_call():
    first = compose_request("abc", PROMPTS, fast_config())
    second = compose_request("abc", PROMPTS, fast_config())
    assert first == second
    assert first is not second
    assert len(second.messages()) == 2  # no accumulated conversation


# ── config validation ────────────────────────────────────────────────


@pytest.mark.parametrize(
    "kw",
    [
        {"samples_per_paper": 0},
        {"temperature": -0.1},
        {"temperature": 2.5},
        {"max_in_flight": 0},
        {"max_retries": -1},
    ],
)
def test_config_rejects_bad_values(kw):
    with pytest.raises(ValueError):
        fast_config(**kw)


def test_sample_overall_invariant():
    triple = CriterionTriple(60, 60, 60)
    with pytest.raises(ValueError):
        ScoreSample(triple=triple, overall=61.0, raw_response="", attempts=1)


# ── aggregation ──────────────────────────────────────────────────────


def test_constant_samples_aggregate():
    backend = MockBackend(seed=3)
    config = fast_config(temperature=0.0, samples_per_paper=5)
    score = score_paper("p1", "constant-doc " * 120, PROMPTS, config, backend)
    assert score.sample_count == 5
    assert score.variation == 0.0
    assert score.overall_mean == score.overall_min == score.overall_max
    assert not score.failed


def test_known_sample_spread():
    overalls = [55, 58, 60, 62, 65]
    script = {f"p1:{slot}": make_response(v) for slot, v in enumerate(overalls)}
    backend = ScriptedBackend(script)
    score = score_paper("p1", "text", PROMPTS, fast_config(samples_per_paper=5), backend)
    assert score.overall_mean == pytest.approx(60.0)
    assert score.overall_min == 55.0
    assert score.overall_max == 65.0
    assert score.variation == pytest.approx(10.0)


def test_critical_comments_track_lowest_sample():
    low = format_triple(CriterionTriple(40, 70, 70, "weak methods", "fine", "fine"))
    high = format_triple(CriterionTriple(80, 60, 75, "strong", "safe bet", "fine"))
    backend = ScriptedBackend({"p1:0": low, "p1:1": high})
    score = score_paper("p1", "text", PROMPTS, fast_config(samples_per_paper=2), backend)
    comments = score.critical_comments()
    assert comments["rigour"] == "weak methods"  # sample 0 scored rigour lower
    assert comments["originality"] == "safe bet"  # sample 1 scored originality lower


# ── retries ──────────────────────────────────────────────────────────


def test_retry_then_success_counts_attempts():
    script = {
        "p1:0": BackendError("down"),
        "p1:0:r1": BackendError("still down"),
        "p1:0:r2": make_response(61),
    }
    backend = ScriptedBackend(script)
    config = fast_config(samples_per_paper=1, max_retries=3)
    score = score_paper("p1", "text", PROMPTS, config, backend)
    assert score.samples[0].attempts == 3
    assert not score.failed


def test_unparseable_response_is_resampled():
    script = {
        "p1:0": "no scores here at all",
        "p1:0:r1": make_response(58),
    }
    backend = ScriptedBackend(script)
    score = score_paper("p1", "text", PROMPTS, fast_config(samples_per_paper=1), backend)
    assert score.samples[0].attempts == 2
    assert score.overall_mean == pytest.approx(58.0)


def test_exhausted_slot_marks_paper_failed_keeps_partials():
    script = {"p1:0": make_response(60), "p1:2": make_response(64)}
    script["p1:1"] = BackendError("dead")
    for r in range(1, 3):
        script[f"p1:1:r{r}"] = BackendError("dead")
    backend = ScriptedBackend(script)
    config = fast_config(samples_per_paper=3, max_retries=2)
    score = score_paper("p1", "text", PROMPTS, config, backend)
    assert score.failed
    assert "sample 1" in score.failure_reason
    assert score.sample_count == 2  # partial samples retained, K not faked


def test_attempts_never_exceed_budget():
    script = {"p1:0": BackendError("dead")}
    for r in range(1, 3):
        script[f"p1:0:r{r}"] = BackendError("dead")
    backend = ScriptedBackend(script)
    config = fast_config(samples_per_paper=1, max_retries=2)
    score = score_paper("p1", "text", PROMPTS, config, backend)
    assert score.failed
    assert len(backend.calls) == config.max_retries + 1


def test_duplicate_record_ids_rejected():
    with pytest.raises(ScoringError, match="duplicate record ids"):
        score_batch(
            [("p1", "a"), ("p1", "b")], PROMPTS, fast_config(), MockBackend()
        )


# ── concurrency ──────────────────────────────────────────────────────


class GaugeBackend:
    """Counts concurrent in-flight completions."""

    def __init__(self, inner):
        self.inner = inner
        self.in_flight = 0
        self.high_water = 0
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest, tag: str = "") -> str:
        with self._lock:
            self.in_flight += 1
            self.high_water = max(self.high_water, self.in_flight)
        try:
            time.sleep(0.002)
            return self.inner.complete(request, tag)
        finally:
            with self._lock:
                self.in_flight -= 1


def test_in_flight_never_exceeds_cap():
    gauge = GaugeBackend(MockBackend(seed=9))
    config = fast_config(max_in_flight=3, samples_per_paper=5)
    papers = [(f"p{i}", f"document body {i} " * 80) for i in range(4)]
    scores = score_batch(papers, PROMPTS, config, gauge)
    assert len(scores) == 4
    assert all(s.sample_count == 5 for s in scores.values())
    assert gauge.high_water <= 3


def test_scoring_order_does_not_matter():
    papers = [(f"p{i}", f"body of paper number {i} " * 60) for i in range(6)]
    config = fast_config(samples_per_paper=3, max_in_flight=5)
    forward = score_batch(papers, PROMPTS, config, MockBackend(seed=5))
    backward = score_batch(papers[::-1], PROMPTS, config, MockBackend(seed=5))
    for rid, score in forward.items():
        other = backward[rid]
        assert [s.raw_response for s in score.samples] == [
            s.raw_response for s in other.samples
        ]
        assert score.overall_mean == other.overall_mean


# ── audit log ────────────────────────────────────────────────────────


def test_audit_line_per_accepted_sample():
    import json

    lines: list[str] = []
    config = fast_config(samples_per_paper=4)
    score_batch(
        [("pA", "alpha " * 100), ("pB", "beta " * 100)],
        PROMPTS,
        config,
        MockBackend(seed=2),
        audit=lines.append,
    )
    assert len(lines) == 8
    records = [json.loads(line) for line in lines]
    assert {(r["record_id"], r["slot"]) for r in records} == {
        (rid, slot) for rid in ("pA", "pB") for slot in range(4)
    }
    assert all(r["attempts"] == 1 for r in records)
    assert all("rigour" in r["response"] for r in records)


# ── mock backend statistics ──────────────────────────────────────────


def test_mock_backend_deterministic():
    backend = MockBackend(seed=7)
    req = compose_request("same document " * 100, PROMPTS, fast_config())
    assert backend.complete(req, "x:1") == backend.complete(req, "x:1")
    assert backend.complete(req, "x:1") != backend.complete(req, "x:2")
    assert MockBackend(seed=8).complete(req, "x:1") != backend.complete(req, "x:1")


def test_mock_zero_temperature_collapses_spread():
    backend = MockBackend(seed=7)
    config = fast_config(temperature=0.0)
    req = compose_request("steady " * 100, PROMPTS, config)
    responses = {backend.complete(req, f"p:{i}") for i in range(5)}
    assert len(responses) == 1


def test_mock_sample_ranges_form_one_hump():
    # Population of per-paper spreads at the default temperature should
    # rise to a single interior mode and fall away, not sit flat.
    backend = MockBackend(seed=11)
    config = fast_config(samples_per_paper=5, temperature=0.2, max_in_flight=8)
    papers = [(f"d{i}", f"synthetic document number {i} with filler " * 40) for i in range(300)]
    scores = score_batch(papers, PROMPTS, config, backend)
    edges = [1.0, 3.0, 5.0, 7.0, 10.0, 15.0, 25.0]
    counts = [0] * len(edges)
    for score in scores.values():
        for idx, edge in enumerate(edges):
            if score.variation <= edge:
                counts[idx] += 1
                break
        else:
            raise AssertionError(f"variation {score.variation} beyond last edge")
    peak = counts.index(max(counts))
    assert 0 < peak < len(counts) - 1
    assert all(counts[i] <= counts[i + 1] for i in range(peak))
    assert all(counts[i] >= counts[i + 1] for i in range(peak, len(counts) - 1))
