"""Coverage comparison between two call-graph edge sets.

Measures the fraction of observed dynamic edges that a reference edge
set (another run, or a static analysis export) contains.  Arithmetic is
exact rational, never floating point.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .errors import EmptyObserved

MATCH_MODES = ("exact", "method-pair")


@dataclass(frozen=True, order=True)
class EdgeKey:
    caller_method: str
    caller_line: "int | None"
    callee_method: str

    def method_pair(self) -> "EdgeKey":
        return EdgeKey(self.caller_method, None, self.callee_method)


@dataclass
class RecallResult:
    fraction: Fraction
    matched: int
    observed: int
    missing: list[EdgeKey]  # observed edges absent from the reference, sorted


def recall(reference: set, observed: set,
           match_mode: str = "method-pair") -> RecallResult:
    """|observed ∩ reference| / |observed| with a missing-edge report.

    ``method-pair`` ignores invocation lines (robust across differently
    instrumented runs); ``exact`` keeps them.
    """
    if match_mode not in MATCH_MODES:
        raise ValueError(f"unknown match mode {match_mode!r}")
    if not observed:
        raise EmptyObserved("observed edge set is empty")
    if match_mode == "method-pair":
        reference = {e.method_pair() for e in reference}
        observed = {e.method_pair() for e in observed}
    missing = sorted(
        observed - reference,
        key=lambda e: (e.caller_method, e.caller_line or 0, e.callee_method),
    )
    matched = len(observed) - len(missing)
    return RecallResult(
        Fraction(matched, len(observed)), matched, len(observed), missing
    )


def read_edges_csv(path) -> set[EdgeKey]:
    """Read a CallGraphEdge.csv export (context columns are ignored)."""
    edges: set[EdgeKey] = set()
    with open(Path(path), encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "invocation" not in reader.fieldnames \
                or "method" not in reader.fieldnames:
            raise ValueError(f"{path}: not a CallGraphEdge export")
        for row in reader:
            caller, _, line_text = row["invocation"].rpartition("/")
            line = None if line_text in ("-", "") else int(line_text)
            edges.add(EdgeKey(caller, line, row["method"]))
    return edges
