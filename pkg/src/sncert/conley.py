"""Homological saddle-node certificates.

A block family isolates a homological saddle-node when the whole block has
trivial index while its attractor and repeller halves carry ``Z`` in adjacent
degrees ``k - 1`` and ``k``.  Condition labels follow the usual numbering:
(i) product structure, (ii) simple blocks, (iii) trivial index of ``S``,
(iv) the attractor/repeller indices.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Union

from .blocks import BlockPair, SimpleBlockReport, conley_index_of_block, validate_simple_block
from .cubical import HomologyResult

PRODUCT_ASSUMPTION = "block is a product B0 x Lambda by construction"


@dataclass(frozen=True)
class ConleyIndexReport:
    ch_S: HomologyResult
    ch_A: HomologyResult
    ch_Astar: HomologyResult
    k: Optional[int]

    def to_dict(self) -> dict:
        return {
            "ch_S": self.ch_S.to_dict(),
            "ch_A": self.ch_A.to_dict(),
            "ch_Astar": self.ch_Astar.to_dict(),
            "k": self.k,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConleyIndexReport":
        def h(x):
            return HomologyResult(tuple(x["betti"]), tuple(tuple(t) for t in x["torsion"]))

        return cls(h(d["ch_S"]), h(d["ch_A"]), h(d["ch_Astar"]), d["k"])


def extract_unstable_dimension(ch_A: HomologyResult, ch_Astar: HomologyResult) -> Optional[int]:
    """The unique ``k >= 1`` with ``ch_A = Z`` at ``k - 1`` and ``ch_Astar = Z`` at ``k``, else ``None``."""
    a = ch_A.single_free_degree()
    s = ch_Astar.single_free_degree()
    if a is None or s is None:
        return None
    if s != a + 1 or s < 1:
        return None
    return s


def conley_index_report(pair: BlockPair) -> ConleyIndexReport:
    ch_S = conley_index_of_block(pair.parent)
    ch_A = conley_index_of_block(pair.B_A)
    ch_Astar = conley_index_of_block(pair.B_Astar)
    return ConleyIndexReport(ch_S, ch_A, ch_Astar, extract_unstable_dimension(ch_A, ch_Astar))


@dataclass(frozen=True)
class ConditionResult:
    name: str
    passed: bool
    detail: str

    def to_dict(self) -> dict:
        return {"condition": self.name, "passed": self.passed, "detail": self.detail}


@dataclass(frozen=True)
class Certificate:
    k: int
    report: ConleyIndexReport
    conditions: tuple
    assumptions: tuple = field(default=(PRODUCT_ASSUMPTION,))

    accepted = True

    def to_dict(self) -> dict:
        return {
            "verdict": "Certificate",
            "k": self.k,
            "conditions": [c.to_dict() for c in self.conditions],
            "assumptions": list(self.assumptions),
            "homology": self.report.to_dict(),
        }


@dataclass(frozen=True)
class Rejection:
    reason: str
    report: ConleyIndexReport
    conditions: tuple

    accepted = False

    def to_dict(self) -> dict:
        return {
            "verdict": "Rejection",
            "reason": self.reason,
            "conditions": [c.to_dict() for c in self.conditions],
            "homology": self.report.to_dict(),
        }


Verdict = Union[Certificate, Rejection]


def certify_homological_saddle_node(
    report: ConleyIndexReport, blocks: Optional[BlockPair], simple: Optional[SimpleBlockReport]
) -> Verdict:
    """Check the four conditions in order; the first failure names the rejection.

    Missing ``blocks`` or ``simple`` evidence fails the condition it supports.
    """
    conds = [ConditionResult("condition i", True, PRODUCT_ASSUMPTION)]
    if blocks is None or simple is None:
        conds.append(ConditionResult("condition ii", False, "no simple-block evidence"))
    else:
        detail = "all sets pass" if simple.passed else "failed: " + ", ".join(simple.failures())
        conds.append(ConditionResult("condition ii", simple.passed, detail))
    conds.append(ConditionResult("condition iii", report.ch_S.is_zero(), f"CH(S): {report.ch_S}"))
    k = extract_unstable_dimension(report.ch_A, report.ch_Astar)
    conds.append(
        ConditionResult(
            "condition iv",
            k is not None and k == report.k,
            f"CH(A): {report.ch_A}; CH(A*): {report.ch_Astar}; k={k}",
        )
    )
    conds = tuple(conds)
    for c in conds:
        if not c.passed:
            return Rejection(c.name, report, conds)
    return Certificate(k, report, conds)


def certify_pair(pair: BlockPair) -> Verdict:
    """Index report, simplicity check and verdict for one block pair."""
    return certify_homological_saddle_node(conley_index_report(pair), pair, validate_simple_block(pair))


def dumps_verdict(v: Verdict) -> str:
    return json.dumps(v.to_dict(), indent=2, sort_keys=True) + "\n"
