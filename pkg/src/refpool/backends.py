"""Scorer backends: request composition, deterministic mock, HTTP client."""

from __future__ import annotations

import hashlib
import os
import random
from dataclasses import dataclass
from typing import Protocol

import requests

from .parser import CriterionTriple, format_triple


class BackendError(RuntimeError):
    """Transport or protocol failure talking to a scorer backend."""


@dataclass(frozen=True)
class ChatRequest:
    """A single self-contained completion request (no conversation state)."""

    system_text: str
    user_text: str
    temperature: float
    model_id: str

    def messages(self) -> list[dict[str, str]]:
        return [
            {"role": "system", "content": self.system_text},
            {"role": "user", "content": self.user_text},
        ]


def compose_request(document_text: str, prompts, config) -> ChatRequest:
    """Build the request for one scoring call: preamble plus full text."""
    if not document_text.strip():
        raise ValueError("document yielded no text")
    return ChatRequest(
        system_text=prompts.system_text,
        user_text=prompts.user_preamble + "\n\n" + document_text,
        temperature=config.temperature,
        model_id=config.model_id,
    )


class Backend(Protocol):
    def complete(self, request: ChatRequest, tag: str = "") -> str:
        """Return the raw completion text for one request.

        tag is an opaque caller-chosen salt (e.g. record id and sample
        slot).  Deterministic backends fold it into their noise source so
        repeat calls with the same tag are byte-identical while different
        slots vary independently; live backends ignore it.
        """
        ...


# Spread of the mock's per-criterion noise at temperature 1 and average
# document volatility; chosen so five samples at temperature 0.2 disperse
# overall scores by a few points, like a real scoring run.
_NOISE_GAIN = 22.0

_NOTES = {
    "rigour": (
        "methods are defensible",
        "analysis holds together",
        "design has gaps",
        "sampling is thin",
        "sound framework",
        "claims outrun the data",
        "careful treatment throughout",
        "coherent but shallow in places",
    ),
    "originality": (
        "builds on known ideas",
        "fresh angle on an old question",
        "incremental contribution",
        "novel framing",
        "derivative in parts",
        "genuinely new synthesis",
        "familiar territory",
        "inventive approach",
    ),
    "significance": (
        "niche audience",
        "moderate field impact",
        "clear policy relevance",
        "limited reach",
        "could shift practice",
        "important for the subfield",
        "broad potential influence",
        "unlikely to travel far",
    ),
}


def _seed_from(*parts: object) -> int:
    blob = "|".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "big")


class MockBackend:
    """Deterministic offline scorer.

    Base criterion scores are a pure function of the request text and the
    seed; per-call noise is keyed by the caller's tag and scaled by the
    request temperature times a per-document volatility factor, so some
    documents score tightly and others swing.
    """

    def __init__(self, seed: int = 0):
        self.seed = seed

    def complete(self, request: ChatRequest, tag: str = "") -> str:
        doc_digest = hashlib.sha256(request.user_text.encode()).hexdigest()
        doc_rng = random.Random(_seed_from(self.seed, "base", doc_digest))
        centre = min(95.0, max(5.0, doc_rng.gauss(57.0, 11.0)))
        bases = {c: centre + doc_rng.gauss(0.0, 4.0) for c in _NOTES}
        # Triangular-ish volatility peaked near 1.1 keeps the population of
        # per-paper sample ranges unimodal rather than uniform.
        volatility = 0.35 + 1.5 * (doc_rng.random() + doc_rng.random()) / 2.0
        notes = {c: doc_rng.choice(_NOTES[c]) for c in _NOTES}

        call_rng = random.Random(_seed_from(self.seed, "noise", doc_digest, tag))
        sigma = _NOISE_GAIN * request.temperature * volatility
        scored = {}
        for criterion, base in bases.items():
            value = base + (call_rng.gauss(0.0, sigma) if sigma > 0 else 0.0)
            scored[criterion] = round(min(100.0, max(0.0, value)), 2)
        triple = CriterionTriple(
            rigour=scored["rigour"],
            originality=scored["originality"],
            significance=scored["significance"],
            rigour_note=notes["rigour"],
            originality_note=notes["originality"],
            significance_note=notes["significance"],
        )
        return format_triple(triple)


class HttpBackend:
    """Chat-completion client for any compatible HTTP endpoint."""

    def __init__(
        self,
        base_url: str,
        api_key_env: str = "SCORER_API_KEY",
        timeout: float = 120.0,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.api_key = os.environ.get(api_key_env, "")
        self.timeout = timeout
        self.session = session or requests.Session()

    def complete(self, request: ChatRequest, tag: str = "") -> str:
        payload = {
            "model": request.model_id,
            "messages": request.messages(),
            "temperature": request.temperature,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self.session.post(
                f"{self.base_url}/v1/chat/completions",
                json=payload,
                headers=headers,
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise BackendError(f"backend request failed: {exc}") from exc
        if resp.status_code != 200:
            raise BackendError(f"backend returned {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise BackendError(f"malformed backend response: {exc}") from exc
