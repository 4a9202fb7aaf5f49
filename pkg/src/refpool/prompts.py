"""Default scoring prompts, their digest, and optional file overrides."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - 3.10 fallback
    import tomli as tomllib

# These two strings are shipped as fixed artifacts: every export records
# their digest so a results file can always be traced to the exact prompt
# wording that produced it.  Do not edit casually; add an override file.
DEFAULT_SYSTEM_TEXT = (
    "You are a hypercritical reviewer of academic papers who scores out of "
    "100% and uses the full range of scores with high precision. Work scored "
    "over 75% is considered world-leading quality and is less commonly seen, "
    "work over 50% is seen as internationally excellent but which falls short "
    "of the highest standards of excellence and is often seen, work over 25% "
    "is recognised internationally and is regularly seen and work under 25% "
    "is recognised nationally."
)

DEFAULT_USER_PREAMBLE = (
    "Critically score this paper on a 100% scale using the full range and "
    "high precision based solely on the three criteria of rigour, originality "
    "and significance. Rigour is the extent to which the paper demonstrates "
    "intellectual coherence and integrity, and adopts robust and appropriate "
    "concepts, analyses, sources, theories and/or methodologies. Originality "
    "is the extent to which the paper makes an important and innovative "
    "contribution to academic understanding and knowledge in the field. "
    "Significance is the extent to which the paper has influenced, or has the "
    "capacity to influence, knowledge and scholarly thought, or the "
    "development and understanding of policy and/or practice. Provide the "
    "response in this consistent format with the percentage score being "
    "contained within [] and the sections separated with the | character: "
    "rigour:[score] short explanation | significance:[score] short "
    "explanation, | originality:[score] short explanation"
)


@dataclass(frozen=True)
class PromptPair:
    """System and user prompt texts used for every scoring request."""

    system_text: str = DEFAULT_SYSTEM_TEXT
    user_preamble: str = DEFAULT_USER_PREAMBLE

    def __post_init__(self) -> None:
        if not self.system_text.strip() or not self.user_preamble.strip():
            raise ValueError("prompt texts must be non-empty")

    def digest(self) -> str:
        """Stable hex digest over both texts, recorded with every export."""
        blob = self.system_text.encode() + b"\x00" + self.user_preamble.encode()
        return hashlib.sha256(blob).hexdigest()


def load_prompt_file(path: str | Path) -> tuple[PromptPair, dict]:
    """Read a prompt override file.

    The file is TOML with optional keys system_text, user_preamble,
    temperature, and samples.  Returns the resulting PromptPair (defaults
    fill any missing text) plus the leftover scoring overrides.
    """
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    unknown = set(data) - {"system_text", "user_preamble", "temperature", "samples"}
    if unknown:
        raise ValueError(f"unknown prompt file keys: {sorted(unknown)}")
    pair = PromptPair(
        system_text=data.get("system_text", DEFAULT_SYSTEM_TEXT),
        user_preamble=data.get("user_preamble", DEFAULT_USER_PREAMBLE),
    )
    overrides = {k: data[k] for k in ("temperature", "samples") if k in data}
    return pair, overrides
