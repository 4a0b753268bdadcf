"""Seeded single-site mutations of summary documents.

Each mutation injects exactly one detectable defect into an otherwise
grounded document, so detector completeness can be measured: the evaluator
must flag the seeded site with the right category and nothing else.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass

from .normalizer import ClinicalContextPackage, SectionKey, canonical_number
from .summarizer import StatementKind, SummaryDocument

MUTATION_KINDS = ("value_change", "temporal_swap", "safety_deletion", "dangling_citation")

_DATE_RE = re.compile(r"\d{4}-\d{2}-\d{2}")


@dataclass(frozen=True)
class SeededMutation:
    kind: str
    detail: str


class MutationNotApplicable(Exception):
    """The document has no statement this mutation could target."""


def apply_mutation(
    doc: SummaryDocument, ccp: ClinicalContextPackage, kind: str, rng: random.Random
) -> tuple[SummaryDocument, SeededMutation]:
    d = doc.to_dict()
    if kind == "value_change":
        candidates = [
            (si, ti)
            for si, sec in enumerate(d["sections"])
            for ti, stmt in enumerate(sec["statements"])
            if stmt["kind"] == "Fact" and stmt["numeric_claims"]
        ]
        if not candidates:
            raise MutationNotApplicable("no fact statement with a numeric claim")
        si, ti = rng.choice(candidates)
        stmt = d["sections"][si]["statements"][ti]
        old = stmt["numeric_claims"][0][0]
        new = canonical_number(float(old) + 1.7)
        stmt["numeric_claims"][0][0] = new
        stmt["text"] = stmt["text"].replace(old, new, 1)
        detail = f"value {old} -> {new} in {stmt['numeric_claims'][0][2]}"
    elif kind == "temporal_swap":
        candidates = [
            (si, ti)
            for si, sec in enumerate(d["sections"])
            for ti, stmt in enumerate(sec["statements"])
            if stmt["kind"] == "Trend" and len(_DATE_RE.findall(stmt["text"])) >= 2
        ]
        if not candidates:
            raise MutationNotApplicable("no trend statement with two dates")
        si, ti = rng.choice(candidates)
        stmt = d["sections"][si]["statements"][ti]
        dates = _DATE_RE.findall(stmt["text"])
        first, last = dates[0], dates[-1]
        if first == last:
            raise MutationNotApplicable("trend dates identical; swap undetectable")
        # Swap latest/prior date anchors in the rendered text.
        placeholder = "\x00"
        text = stmt["text"].replace(first, placeholder)
        text = text.replace(last, first)
        stmt["text"] = text.replace(placeholder, last)
        detail = f"swapped dates {first} and {last}"
    elif kind == "safety_deletion":
        allergy_key = SectionKey.ALLERGIES_AND_INTOLERANCES.value
        for sec in d["sections"]:
            if sec["key"] == allergy_key:
                facts = [s for s in sec["statements"] if s["kind"] == "Fact"]
                if not facts:
                    break
                victim = rng.choice(facts)
                sec["statements"] = [s for s in sec["statements"] if s is not victim]
                detail = f"deleted allergy statement citing {victim['evidence_refs']}"
                return SummaryDocument.from_dict(d), SeededMutation(kind, detail)
        raise MutationNotApplicable("no allergy statement to delete")
    elif kind == "dangling_citation":
        ghost = "Condition/ghost-evidence"
        assert ccp.find_evidence(ghost) is None
        d["sections"][0]["statements"].append(
            {
                "text": "Prior myocardial infarction — 2018-03-01",
                "section": d["sections"][0]["key"],
                "kind": "Fact",
                "evidence_refs": [ghost],
                "numeric_claims": [],
            }
        )
        detail = f"appended statement citing {ghost}"
    else:
        raise ValueError(f"unknown mutation kind {kind!r}")
    return SummaryDocument.from_dict(d), SeededMutation(kind, detail)
