"""Run report helpers and schema validation.

Reports hold only simulation-time quantities, never wall-clock ones, so a
repeated run of the same scenario file serializes to identical bytes.
"""

from __future__ import annotations

import json
from importlib import resources

import jsonschema


def build_stats(samples: list[int]) -> dict:
    """Order statistics over integer millisecond samples."""
    if not samples:
        return {"count": 0, "min": 0, "p50": 0, "p90": 0, "max": 0, "mean": 0}
    ordered = sorted(samples)
    n = len(ordered)

    def pct(q: float) -> int:
        return ordered[min(n - 1, int(q * n))]

    return {
        "count": n,
        "min": ordered[0],
        "p50": pct(0.50),
        "p90": pct(0.90),
        "max": ordered[-1],
        # Integer mean keeps report bytes stable across platforms.
        "mean": sum(ordered) // n,
    }


def _schema() -> dict:
    text = resources.files("ruledger.harness").joinpath("report.schema.json").read_text()
    return json.loads(text)


def validate_report(report: dict) -> None:
    jsonschema.validate(report, _schema())


def report_bytes(report: dict) -> bytes:
    return (json.dumps(report, indent=2, sort_keys=True) + "\n").encode("utf-8")
