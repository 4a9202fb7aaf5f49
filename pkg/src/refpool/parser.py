"""Parse and render the pipe-separated three-criterion response format."""

from __future__ import annotations

import re
from dataclasses import dataclass

CRITERIA = ("rigour", "originality", "significance")

_SECTION = re.compile(
    r"\b(rigour|originality|significance)\s*:\s*\[([^\]]*)\]", re.IGNORECASE
)


class ResponseParseError(ValueError):
    """Raised when a scorer response does not follow the expected layout."""


@dataclass(frozen=True)
class CriterionTriple:
    """One response's three criterion scores with their short explanations."""

    rigour: float
    originality: float
    significance: float
    rigour_note: str = ""
    originality_note: str = ""
    significance_note: str = ""

    @property
    def overall(self) -> float:
        return (self.rigour + self.originality + self.significance) / 3.0

    def score(self, criterion: str) -> float:
        return float(getattr(self, criterion))

    def note(self, criterion: str) -> str:
        return str(getattr(self, f"{criterion}_note"))


def _clean_note(raw: str) -> str:
    # Explanations sometimes arrive with a dangling comma before the next
    # pipe; strip separators and whitespace from both ends until stable.
    out = raw
    while True:
        trimmed = out.strip().strip("|,")
        if trimmed == out:
            return out
        out = trimmed


def parse_response(text: str) -> CriterionTriple:
    """Extract the three labelled scores from a raw scorer response.

    Tolerates arbitrary section order, extra whitespace, a % sign inside
    the brackets, and trailing commas after an explanation.  Anything
    missing, duplicated, or out of range raises ResponseParseError.
    """
    matches = list(_SECTION.finditer(text))
    scores: dict[str, float] = {}
    notes: dict[str, str] = {}
    for i, match in enumerate(matches):
        label = match.group(1).lower()
        if label in scores:
            raise ResponseParseError(f"duplicate {label} section")
        raw_score = match.group(2).strip().rstrip("%").strip()
        try:
            value = float(raw_score)
        except ValueError:
            raise ResponseParseError(f"unreadable {label} score: {raw_score!r}") from None
        if not 0.0 <= value <= 100.0:
            raise ResponseParseError(f"{label} score out of range: {value}")
        end = matches[i + 1].start() if i + 1 < len(matches) else len(text)
        scores[label] = value
        notes[label] = _clean_note(text[match.end():end])
    for label in CRITERIA:
        if label not in scores:
            raise ResponseParseError(f"missing {label} section")
    return CriterionTriple(
        rigour=scores["rigour"],
        originality=scores["originality"],
        significance=scores["significance"],
        rigour_note=notes["rigour"],
        originality_note=notes["originality"],
        significance_note=notes["significance"],
    )


def format_triple(triple: CriterionTriple) -> str:
    """Render a triple in the canonical response layout.

    The layout mirrors what the scorer is instructed to emit, including
    the stray comma after the significance section; parse_response is the
    inverse for explanations free of pipes and trailing separators.
    """
    return (
        f"rigour:[{_fmt(triple.rigour)}] {triple.rigour_note}"
        f" | significance:[{_fmt(triple.significance)}] {triple.significance_note},"
        f" | originality:[{_fmt(triple.originality)}] {triple.originality_note}"
    )


def _fmt(score: float) -> str:
    text = f"{score:.2f}".rstrip("0").rstrip(".")
    return text if text else "0"
