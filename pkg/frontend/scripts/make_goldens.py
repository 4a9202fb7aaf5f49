"""Regenerate tests/fixtures/golden_states.json from the refpool package.

Each state is a pool of papers with inclusion flags and an active boundary
set; the expected projection and per-paper grades come straight from the
refpool calibration code, so the dashboard's client-side math is tested
against the pipeline that owns the rules.

Run from this directory with the refpool package installed:

    python3 make_goldens.py
"""

import json
import random
from pathlib import Path

from refpool.calibration import (
    BoundaryEstimate,
    BoundarySet,
    assign_star,
    project_profile,
)

OUT = Path(__file__).parent.parent / "tests" / "fixtures" / "golden_states.json"

# A few deliberate boundary sets alongside random ones: the published
# reference cuts, the demo corpus overall cuts, and a squeezed band.
FIXED_BOUNDARIES = [
    (49.35, 58.52, 69.06),
    (49.85, 58.95, 70.56),
    (40.0, 60.0, 62.5),
]


def est(value: float) -> BoundaryEstimate:
    return BoundaryEstimate(lo=value, hi=value, point=value)


def make_state(rng: random.Random, index: int) -> dict:
    n = rng.randint(4, 44)
    papers = []
    for j in range(n):
        mean = round(rng.uniform(20.0, 95.0), 2)
        lo = round(mean - rng.uniform(0.0, 8.0), 2)
        hi = round(mean + rng.uniform(0.0, 8.0), 2)
        papers.append(
            {
                "label": f"University Z Paper {j + 1}",
                "mean": mean,
                "min": max(0.0, lo),
                "max": min(100.0, hi),
                "included": rng.random() > 0.25,
            }
        )
    if not any(p["included"] for p in papers):
        papers[0]["included"] = True

    if index < len(FIXED_BOUNDARIES):
        b12, b23, b34 = FIXED_BOUNDARIES[index]
    else:
        b12 = round(rng.uniform(35.0, 52.0), 2)
        b23 = round(b12 + rng.uniform(3.0, 12.0), 2)
        b34 = round(b23 + rng.uniform(3.0, 15.0), 2)
    boundaries = BoundarySet(b12=est(b12), b23=est(b23), b34=est(b34))

    included_means = [p["mean"] for p in papers if p["included"]]
    projection = project_profile(included_means, boundaries)
    return {
        "name": f"state-{index + 1:02d}",
        "boundaries": {"b12": b12, "b23": b23, "b34": b34},
        "papers": papers,
        "expected": {
            "profile": {
                "pct4": projection.profile.pct_4,
                "pct3": projection.profile.pct_3,
                "pct2": projection.profile.pct_2,
                "pct1": projection.profile.pct_1,
                "pctU": projection.profile.pct_u,
            },
            "gpa": projection.gpa,
            "qrShare": projection.qr_share,
            "grades": {
                p["label"]: assign_star(p["mean"], boundaries).label for p in papers
            },
        },
    }


def main() -> None:
    rng = random.Random("pool-studio-goldens")
    states = [make_state(rng, i) for i in range(20)]
    OUT.parent.mkdir(parents=True, exist_ok=True)
    with open(OUT, "w", encoding="utf-8") as fh:
        json.dump({"states": states}, fh, indent=1)
        fh.write("\n")
    print(f"wrote {OUT} ({len(states)} states)")


if __name__ == "__main__":
    main()
