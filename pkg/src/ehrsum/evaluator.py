"""Mechanical evaluation of (context package, summary) pairs.

The context package is the reference source of truth. Metrics: per-domain
coverage, section completeness, safety-critical omission findings, and a
four-way error taxonomy (omission, incorrect value, incorrect temporal
context, hallucination/inference). Also hosts the named stress cases, run
end-to-end through the mock retrieval source.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Callable, Optional

from .fhir_client import EndpointConfig, retrieve_patient_context, _utcnow
from .normalizer import (
    SECTION_LABELS,
    ClinicalContextPackage,
    EvidenceItem,
    SectionKey,
    SectionState,
    build_context_package,
)
from .summarizer import (
    RenderMode,
    StatementKind,
    SummaryDocument,
    ViolationCategory,
    _tokens,
    _item_tokens,
    summarize_deterministic,
    validate_grounding,
)

ANTICOAGULANT_KEYWORDS = (
    "warfarin",
    "apixaban",
    "rivaroxaban",
    "dabigatran",
    "edoxaban",
    "heparin",
    "enoxaparin",
)


class ErrorCategory(Enum):
    OMISSION = "Omission"
    INCORRECT_VALUE = "IncorrectValue"
    INCORRECT_TEMPORAL_CONTEXT = "IncorrectTemporalContext"
    HALLUCINATION_INFERENCE = "HallucinationInference"


@dataclass(frozen=True)
class ChecklistDomain:
    label: str
    section: SectionKey
    safety_critical: bool = False
    keywords: tuple[str, ...] = ()  # empty = match every item in the section
    status_in: tuple[str, ...] = ()
    latest_per_code: bool = False

    def matches(self, item: EvidenceItem, section_items: list[EvidenceItem]) -> bool:
        if item.section is not self.section:
            return False
        if self.status_in and (item.status or "") not in self.status_in:
            return False
        if self.keywords:
            toks = _item_tokens(item)
            if not any(kw in toks for kw in self.keywords):
                return False
        if self.latest_per_code:
            code = item.primary_code()
            if code is None or item.effective_at is None:
                return False
            peers = [
                p
                for p in section_items
                if p.primary_code() == code and p.effective_at is not None
            ]
            newest = max(peers, key=lambda p: (p.effective_at, p.evidence_id))
            return item.evidence_id == newest.evidence_id
        return True

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "section": self.section.value,
            "safety_critical": self.safety_critical,
            "keywords": list(self.keywords),
            "status_in": list(self.status_in),
            "latest_per_code": self.latest_per_code,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChecklistDomain":
        return cls(
            label=d["label"],
            section=SectionKey(d["section"]),
            safety_critical=d.get("safety_critical", False),
            keywords=tuple(d.get("keywords", [])),
            status_in=tuple(d.get("status_in", [])),
            latest_per_code=d.get("latest_per_code", False),
        )


@dataclass(frozen=True)
class Checklist:
    domains: tuple[ChecklistDomain, ...]

    def to_dict(self) -> dict:
        return {"domains": [d.to_dict() for d in self.domains]}

    @classmethod
    def from_dict(cls, d: dict) -> "Checklist":
        return cls(tuple(ChecklistDomain.from_dict(x) for x in d["domains"]))


def default_checklist() -> Checklist:
    return Checklist(
        (
            ChecklistDomain("demographics", SectionKey.PATIENT_INFORMATION),
            ChecklistDomain(
                "active-problems",
                SectionKey.CONDITIONS,
                status_in=("active", "recurrence", "relapse"),
            ),
            ChecklistDomain(
                "historical-problems",
                SectionKey.CONDITIONS,
                status_in=("inactive", "remission", "resolved"),
            ),
            ChecklistDomain("current-medications", SectionKey.MEDICATIONS, status_in=("active",)),
            ChecklistDomain(
                "allergies", SectionKey.ALLERGIES_AND_INTOLERANCES, safety_critical=True
            ),
            ChecklistDomain(
                "recent-labs-vitals",
                SectionKey.LABORATORY_AND_VITAL_SIGNS,
                latest_per_code=True,
            ),
            ChecklistDomain("major-procedures", SectionKey.PROCEDURES),
            ChecklistDomain("encounter-context", SectionKey.ENCOUNTERS),
            ChecklistDomain("preventive-care", SectionKey.IMMUNIZATIONS),
            ChecklistDomain(
                "anticoagulants",
                SectionKey.MEDICATIONS,
                safety_critical=True,
                keywords=ANTICOAGULANT_KEYWORDS,
            ),
        )
    )


@dataclass(frozen=True)
class EvaluationReport:
    coverage: dict  # domain label -> fraction or None (not applicable)
    section_completeness: dict  # SectionKey value -> fraction
    errors: tuple[tuple[str, str, str], ...]  # (category, ref, detail)
    omission_findings: tuple[tuple[str, str], ...]  # (domain, evidence_id)
    overall_pass: bool

    def to_dict(self) -> dict:
        return {
            "coverage": self.coverage,
            "section_completeness": self.section_completeness,
            "errors": [list(e) for e in self.errors],
            "omission_findings": [list(f) for f in self.omission_findings],
            "overall_pass": self.overall_pass,
        }

    def to_json(self, indent: Optional[int] = 2) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=indent)


def _domain_matches(
    ccp: ClinicalContextPackage, domain: ChecklistDomain
) -> list[EvidenceItem]:
    _, items = ccp.section(domain.section)
    section_items = list(items)
    return [i for i in section_items if domain.matches(i, section_items)]


def coverage_score(
    ccp: ClinicalContextPackage, doc: SummaryDocument, checklist: Optional[Checklist] = None
) -> dict:
    """Fraction of each domain's evidence cited by at least one statement;
    None for domains with no matching evidence (not applicable)."""
    checklist = checklist or default_checklist()
    cited = doc.cited_ids()
    scores: dict = {}
    for domain in checklist.domains:
        matched = _domain_matches(ccp, domain)
        if not matched:
            scores[domain.label] = None
            continue
        hit = sum(1 for i in matched if i.evidence_id in cited)
        scores[domain.label] = hit / len(matched)
    return scores


def omission_risk(
    ccp: ClinicalContextPackage, doc: SummaryDocument, checklist: Optional[Checklist] = None
) -> list[tuple[str, str]]:
    """Every safety-critical evidence item present in the CCP but cited by no
    statement."""
    checklist = checklist or default_checklist()
    cited = doc.cited_ids()
    findings: list[tuple[str, str]] = []
    for domain in checklist.domains:
        if not domain.safety_critical:
            continue
        for item in _domain_matches(ccp, domain):
            if item.evidence_id not in cited:
                findings.append((domain.label, item.evidence_id))
    return findings


_DATE_RE = re.compile(r"\d{4}-\d{2}-\d{2}")


def categorize_errors(
    ccp: ClinicalContextPackage, doc: SummaryDocument, checklist: Optional[Checklist] = None
) -> list[tuple[ErrorCategory, str, str]]:
    """Map detector outputs onto the four-way taxonomy."""
    checklist = checklist or default_checklist()
    errors: list[tuple[ErrorCategory, str, str]] = []
    index = ccp.evidence_index()

    violations = validate_grounding(doc, ccp)
    flagged_unresolved: set[int] = set()
    for v in violations:
        ref = f"statement[{v.statement_index}]"
        if v.category is ViolationCategory.VALUE_MISMATCH:
            errors.append((ErrorCategory.INCORRECT_VALUE, ref, v.detail))
        elif v.category in (
            ViolationCategory.UNRESOLVED_EVIDENCE,
            ViolationCategory.FOREIGN_CONTENT,
        ):
            if v.statement_index not in flagged_unresolved:
                errors.append((ErrorCategory.HALLUCINATION_INFERENCE, ref, v.detail))
                flagged_unresolved.add(v.statement_index)
        else:
            errors.append((ErrorCategory.HALLUCINATION_INFERENCE, ref, v.detail))

    # Temporal checks over statements whose evidence resolves.
    for i, stmt in enumerate(doc.all_statements()):
        if i in flagged_unresolved or stmt.kind is StatementKind.MISSING_DATA:
            continue
        resolved = [index[r] for r in stmt.evidence_refs if r in index]
        if not resolved:
            continue
        dates = _DATE_RE.findall(stmt.text)
        if stmt.kind is StatementKind.TREND and len(dates) >= 2:
            if dates[0] < dates[-1]:
                errors.append(
                    (
                        ErrorCategory.INCORRECT_TEMPORAL_CONTEXT,
                        f"statement[{i}]",
                        f"trend anchors out of order: latest {dates[0]} vs prior {dates[-1]}",
                    )
                )
                continue
            # The cited latest item must carry the maximal date for its code.
            latest_item = resolved[0]
            code = latest_item.primary_code()
            if code is not None and latest_item.effective_at is not None:
                _, section_items = ccp.section(latest_item.section)
                peers = [
                    p
                    for p in section_items
                    if p.primary_code() == code and p.effective_at is not None
                ]
                if any(p.effective_at > latest_item.effective_at for p in peers):
                    errors.append(
                        (
                            ErrorCategory.INCORRECT_TEMPORAL_CONTEXT,
                            f"statement[{i}]",
                            f"trend cites non-maximal-date item {latest_item.evidence_id}",
                        )
                    )
        elif stmt.kind is StatementKind.FACT and dates:
            cited_dates = {
                item.effective_at.astimezone(timezone.utc).date().isoformat()
                for item in resolved
                if item.effective_at is not None
            }
            if cited_dates and not (set(dates) & cited_dates):
                errors.append(
                    (
                        ErrorCategory.INCORRECT_TEMPORAL_CONTEXT,
                        f"statement[{i}]",
                        f"statement dates {dates} differ from cited item dates",
                    )
                )

    cited = doc.cited_ids()
    for domain in checklist.domains:
        for item in _domain_matches(ccp, domain):
            if item.evidence_id not in cited:
                errors.append(
                    (
                        ErrorCategory.OMISSION,
                        item.evidence_id,
                        f"{domain.label} evidence not cited by any statement",
                    )
                )
    return errors


def section_completeness(ccp: ClinicalContextPackage, doc: SummaryDocument) -> dict:
    cited = doc.cited_ids()
    out: dict = {}
    for key, state, items in ccp.sections:
        if not items:
            out[key.value] = None
            continue
        out[key.value] = sum(1 for i in items if i.evidence_id in cited) / len(items)
    return out


def evaluate(
    ccp: ClinicalContextPackage, doc: SummaryDocument, checklist: Optional[Checklist] = None
) -> EvaluationReport:
    checklist = checklist or default_checklist()
    errors = categorize_errors(ccp, doc, checklist)
    findings = omission_risk(ccp, doc, checklist)
    has_hallucination = any(e[0] is ErrorCategory.HALLUCINATION_INFERENCE for e in errors)
    return EvaluationReport(
        coverage=coverage_score(ccp, doc, checklist),
        section_completeness=section_completeness(ccp, doc),
        errors=tuple((e[0].value, e[1], e[2]) for e in errors),
        omission_findings=tuple(findings),
        overall_pass=not findings and not has_hallucination,
    )


# --- stress suite -------------------------------------------------------------


@dataclass(frozen=True)
class StressCaseResult:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class StressSuiteReport:
    cases: tuple[StressCaseResult, ...]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.cases)

    def to_dict(self) -> dict:
        return {
            "all_passed": self.all_passed,
            "cases": [
                {"name": c.name, "passed": c.passed, "detail": c.detail} for c in self.cases
            ],
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=indent)

    def render_table(self) -> str:
        width = max(len(c.name) for c in self.cases)
        lines = []
        for c in self.cases:
            mark = "PASS" if c.passed else "FAIL"
            lines.append(f"{c.name.ljust(width)}  {mark}  {c.detail}")
        return "\n".join(lines)


def _run_pipeline(profile, seed: int, clock: Callable[[], datetime]):
    from . import testkit

    bundles = testkit.generate_patient(profile)
    transport = testkit.mock_source([bundles], profile)
    # Page size 2 on the mock means long lab histories need a high page cap.
    config = EndpointConfig(base_url=testkit.MOCK_BASE_URL, max_pages=500, retry_backoff_s=0.0)
    records, report = retrieve_patient_context(config, bundles.patient_id, transport, clock)
    ccp = build_context_package(records, report, clock)
    doc = summarize_deterministic(ccp, RenderMode.NOTICE_EMPTY, clock=clock)
    return bundles, ccp, doc


def run_stress_suite(seed: int = 0, clock: Callable[[], datetime] = _utcnow) -> StressSuiteReport:
    """Run the four named complex cases end-to-end: retrieval (mock) through
    normalization, summarization, and evaluation."""
    from . import testkit

    cases: list[StressCaseResult] = []

    def record(name: str, checks: list[str]):
        cases.append(
            StressCaseResult(name, not checks, "; ".join(checks) if checks else "ok")
        )

    # 1. Missing resources: unpopulated and unsupported domains degrade to
    # notices, never crash, never invent content.
    checks: list[str] = []
    profile = testkit.named_profile("missing-resources", seed)
    try:
        _, ccp, doc = _run_pipeline(profile, seed, clock)
        if validate_grounding(doc, ccp):
            checks.append("grounding violations on degraded summary")
        state, _ = ccp.section(SectionKey.DEVICES)
        if state is not SectionState.UNAVAILABLE:
            checks.append("unsupported Device search not marked Unavailable")
        notice_sections = {
            key for key, stmts in doc.sections if any(s.kind is StatementKind.MISSING_DATA for s in stmts)
        }
        if SectionKey.DEVICES not in notice_sections:
            checks.append("no missing-data notice for unavailable Devices section")
        empty_keys = [k for k, s, items in ccp.sections if s is SectionState.EMPTY]
        if not all(k in notice_sections for k in empty_keys):
            checks.append("empty sections lack missing-data notices")
    except Exception as exc:  # the case asserts "no crash"
        checks.append(f"pipeline crashed: {exc!r}")
    record("missing-resources", checks)

    # 2. Conflicting observations: same code, same instant, different values
    # are both retained and both cited.
    checks = []
    profile = testkit.named_profile("conflicting-observations", seed)
    try:
        bundles, ccp, doc = _run_pipeline(profile, seed, clock)
        conflict = bundles.manifest["conflicting_observations"]
        _, labs = ccp.section(SectionKey.LABORATORY_AND_VITAL_SIGNS)
        retained = [
            i for i in labs if i.primary_code() and i.primary_code()[1] == conflict["code"]
        ]
        if len(retained) != 2:
            checks.append(f"expected 2 conflicting items retained, found {len(retained)}")
        cited = doc.cited_ids()
        uncited = [i.evidence_id for i in retained if i.evidence_id not in cited]
        if uncited:
            checks.append(f"conflicting items not cited: {uncited}")
        if validate_grounding(doc, ccp):
            checks.append("grounding violations")
    except Exception as exc:
        checks.append(f"pipeline crashed: {exc!r}")
    record("conflicting-observations", checks)

    # 3. Duplicate medication orders collapse to one statement that surfaces
    # the duplicate count.
    checks = []
    profile = testkit.named_profile("duplicate-medications", seed)
    try:
        bundles, ccp, doc = _run_pipeline(profile, seed, clock)
        group = bundles.manifest["dedup_groups"][0]
        _, meds = ccp.section(SectionKey.MEDICATIONS)
        survivors = [
            i for i in meds if i.primary_code() and i.primary_code()[1] == group["code"]
        ]
        if len(survivors) != 1:
            checks.append(f"expected 1 surviving order, found {len(survivors)}")
        elif survivors[0].duplicate_count != group["count"]:
            checks.append(
                f"duplicate_count {survivors[0].duplicate_count} != seeded {group['count']}"
            )
        else:
            stmts = [
                s
                for _, sec_stmts in doc.sections
                for s in sec_stmts
                if survivors[0].evidence_id in s.evidence_refs
            ]
            if not stmts:
                checks.append("surviving order not cited")
            elif f"x{group['count']}" not in stmts[0].text:
                checks.append("duplicate count not surfaced in statement text")
        if validate_grounding(doc, ccp):
            checks.append("grounding violations")
    except Exception as exc:
        checks.append(f"pipeline crashed: {exc!r}")
    record("duplicate-medications", checks)

    # 4. Highly longitudinal lab histories: the trend must cite the true
    # max-date value from the generation manifest.
    checks = []
    profile = testkit.named_profile("longitudinal-labs", seed)
    try:
        bundles, ccp, doc = _run_pipeline(profile, seed, clock)
        facts = bundles.manifest["lab_series"]["4548-4"]
        trend = next(t for t in ccp.trends if t.code[1] == "4548-4")
        if trend.latest[1] != facts["max_value"]:
            checks.append(f"trend latest {trend.latest[1]} != manifest {facts['max_value']}")
        latest_item = ccp.find_evidence(trend.latest_evidence_id)
        manifest_date = facts["max_date"].replace("Z", "+00:00")
        if latest_item.effective_at != datetime.fromisoformat(manifest_date):
            checks.append("trend latest instant differs from manifest max date")
        trend_stmts = [s for s in doc.all_statements() if s.kind is StatementKind.TREND]
        if not any(trend.latest_evidence_id in s.evidence_refs for s in trend_stmts):
            checks.append("max-date item not cited by a trend statement")
        if validate_grounding(doc, ccp):
            checks.append("grounding violations")
    except Exception as exc:
        checks.append(f"pipeline crashed: {exc!r}")
    record("longitudinal-labs", checks)

    return StressSuiteReport(tuple(cases))
