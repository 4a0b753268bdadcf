"""Structured, evidence-grounded summarization over a clinical context package.

Two backends share one document schema: a deterministic template-based
renderer (grounded by construction) and an adapter for a hosted generative
endpoint whose output must pass the grounding validator or the document falls
back to the deterministic rendering. Also hosts the grounded follow-up Q&A.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Callable, Optional

from .fhir_client import TransportTimeout, _iso, _parse_iso, _utcnow
from .normalizer import (
    SECTION_LABELS,
    ClinicalContextPackage,
    EvidenceItem,
    SectionKey,
    SectionState,
    TrendEntry,
    canonical_number,
)

DEFAULT_DISCLAIMER = (
    "This summary was generated automatically from retrieved electronic health "
    "record data. It is a chart review aid, not medical advice; verify against "
    "the source record before clinical use."
)

# Case-insensitive phrases that mark recommendation language, which summaries
# must never contain.
DEFAULT_RECOMMENDATION_LEXICON = (
    "recommend",
    "should start",
    "should stop",
    "consider prescribing",
    "advise",
    "suggest initiating",
    "needs to be treated with",
)

GUARDRAIL_INSTRUCTIONS = (
    "Produce a concise clinical summary organized into the predefined sections. "
    "Avoid repeating the input context and avoid conversational filler. "
    "Omit sections that have no supporting evidence. "
    "Avoid diagnostic or treatment recommendations. "
    "Cite the evidence_id of every supporting context item per statement."
)


class StatementKind(Enum):
    FACT = "Fact"
    TREND = "Trend"
    MISSING_DATA = "MissingData"


class ViolationCategory(Enum):
    UNRESOLVED_EVIDENCE = "UnresolvedEvidence"
    VALUE_MISMATCH = "ValueMismatch"
    RECOMMENDATION_LANGUAGE = "RecommendationLanguage"
    FOREIGN_CONTENT = "ForeignContent"


class RenderMode(Enum):
    OMIT_EMPTY = "omit_empty"
    NOTICE_EMPTY = "notice_empty"


@dataclass(frozen=True)
class BackendKind:
    kind: str  # "deterministic" | "hosted"
    endpoint_url: Optional[str] = None
    model_name: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("deterministic", "hosted"):
            raise ValueError(f"unknown backend kind: {self.kind!r}")
        if self.kind == "hosted" and not self.endpoint_url:
            raise ValueError("hosted backend requires an endpoint URL")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "endpoint_url": self.endpoint_url, "model_name": self.model_name}

    @classmethod
    def from_dict(cls, d: dict) -> "BackendKind":
        return cls(d["kind"], d.get("endpoint_url"), d.get("model_name"))


DETERMINISTIC = BackendKind("deterministic")


@dataclass(frozen=True)
class SummaryStatement:
    text: str
    section: SectionKey
    kind: StatementKind
    evidence_refs: tuple[str, ...] = ()
    numeric_claims: tuple[tuple[str, str, str], ...] = ()  # (value, unit, evidence_id)

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "section": self.section.value,
            "kind": self.kind.value,
            "evidence_refs": list(self.evidence_refs),
            "numeric_claims": [list(c) for c in self.numeric_claims],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SummaryStatement":
        return cls(
            text=d["text"],
            section=SectionKey(d["section"]),
            kind=StatementKind(d["kind"]),
            evidence_refs=tuple(d.get("evidence_refs", [])),
            numeric_claims=tuple(tuple(c) for c in d.get("numeric_claims", [])),
        )


@dataclass(frozen=True)
class SummaryDocument:
    patient_header: str
    sections: tuple[tuple[SectionKey, tuple[SummaryStatement, ...]], ...]
    disclaimer: str
    ccp_fingerprint: str
    backend: BackendKind
    generated_at: datetime
    fallback_violations: tuple[str, ...] = ()

    def all_statements(self) -> list[SummaryStatement]:
        return [s for _, stmts in self.sections for s in stmts]

    def cited_ids(self) -> set[str]:
        return {ref for s in self.all_statements() for ref in s.evidence_refs}

    def to_dict(self) -> dict:
        return {
            "patient_header": self.patient_header,
            "sections": [
                {"key": key.value, "statements": [s.to_dict() for s in stmts]}
                for key, stmts in self.sections
            ],
            "disclaimer": self.disclaimer,
            "ccp_fingerprint": self.ccp_fingerprint,
            "backend": self.backend.to_dict(),
            "generated_at": _iso(self.generated_at),
            "fallback_violations": list(self.fallback_violations),
        }

    def to_json(self, indent: Optional[int] = None) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=indent)

    @classmethod
    def from_dict(cls, d: dict) -> "SummaryDocument":
        return cls(
            patient_header=d["patient_header"],
            sections=tuple(
                (
                    SectionKey(s["key"]),
                    tuple(SummaryStatement.from_dict(x) for x in s["statements"]),
                )
                for s in d["sections"]
            ),
            disclaimer=d["disclaimer"],
            ccp_fingerprint=d["ccp_fingerprint"],
            backend=BackendKind.from_dict(d["backend"]),
            generated_at=_parse_iso(d["generated_at"]),
            fallback_violations=tuple(d.get("fallback_violations", [])),
        )

    @classmethod
    def from_json(cls, text: str) -> "SummaryDocument":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class GroundingViolation:
    statement_index: int
    category: ViolationCategory
    detail: str

    def to_dict(self) -> dict:
        return {
            "statement_index": self.statement_index,
            "category": self.category.value,
            "detail": self.detail,
        }


@dataclass(frozen=True)
class GroundedAnswer:
    text: str
    evidence_refs: tuple[str, ...]
    refused: bool
    refusal_reason: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "evidence_refs": list(self.evidence_refs),
            "refused": self.refused,
            "refusal_reason": self.refusal_reason,
        }


class FingerprintMismatchError(Exception):
    """Document and context package come from different runs."""


class BackendError(Exception):
    """Hosted backend unreachable or returned an unusable response."""


# --- deterministic rendering --------------------------------------------------


def _date_str(dt: Optional[datetime]) -> Optional[str]:
    if dt is None:
        return None
    return dt.astimezone(timezone.utc).date().isoformat()


def render_fact(item: EvidenceItem) -> str:
    parts = item.display
    if item.section is SectionKey.LABORATORY_AND_VITAL_SIGNS and "value" in item.attributes:
        value = item.attributes["value"]
        unit = item.attributes.get("unit", "")
        parts += f" {value}" + (f" {unit}" if unit else "")
    if item.section is SectionKey.MEDICATIONS and item.attributes.get("dose"):
        parts += f", {item.attributes['dose']}"
    if item.section is SectionKey.ALLERGIES_AND_INTOLERANCES and item.attributes.get("criticality"):
        parts += f", criticality {item.attributes['criticality']}"
    if item.status:
        parts += f", {item.status}"
    date = _date_str(item.effective_at)
    if date:
        parts += f" — {date}"
    if item.duplicate_count > 1:
        parts += f" (x{item.duplicate_count} entries)"
    return parts


def _fact_statement(item: EvidenceItem) -> SummaryStatement:
    claims: list[tuple[str, str, str]] = []
    if item.section is SectionKey.LABORATORY_AND_VITAL_SIGNS and "value" in item.attributes:
        try:
            float(item.attributes["value"])
            claims.append(
                (item.attributes["value"], item.attributes.get("unit", ""), item.evidence_id)
            )
        except ValueError:
            pass
    return SummaryStatement(
        text=render_fact(item),
        section=item.section,
        kind=StatementKind.FACT,
        evidence_refs=(item.evidence_id,),
        numeric_claims=tuple(claims),
    )


def _trend_statement(trend: TrendEntry) -> SummaryStatement:
    latest_dt, latest_val, unit = trend.latest
    assert trend.prior is not None
    prior_dt, prior_val, _ = trend.prior
    text = (
        f"{trend.code[2]}: {canonical_number(latest_val)}"
        + (f" {unit}" if unit else "")
        + f" on {_date_str(latest_dt)}"
        + f" ({trend.direction} from {canonical_number(prior_val)} on {_date_str(prior_dt)})"
    )
    return SummaryStatement(
        text=text,
        section=SectionKey.LABORATORY_AND_VITAL_SIGNS,
        kind=StatementKind.TREND,
        evidence_refs=(trend.latest_evidence_id, trend.prior_evidence_id),
        numeric_claims=(
            (canonical_number(latest_val), unit, trend.latest_evidence_id),
            (canonical_number(prior_val), unit, trend.prior_evidence_id),
        ),
    )


def empty_notice(key: SectionKey) -> str:
    return f"No {SECTION_LABELS[key].lower()} available"


def unavailable_notice(key: SectionKey) -> str:
    return f"{SECTION_LABELS[key]} unavailable from source"


def _patient_header(ccp: ClinicalContextPackage) -> str:
    p = ccp.patient
    extras = []
    if p.attributes.get("gender"):
        extras.append(p.attributes["gender"])
    if p.attributes.get("birth_date"):
        extras.append(f"born {p.attributes['birth_date']}")
    suffix = f" ({', '.join(extras)})" if extras else ""
    return f"Patient: {p.display}{suffix}"


def summarize_deterministic(
    ccp: ClinicalContextPackage,
    mode: RenderMode = RenderMode.NOTICE_EMPTY,
    disclaimer: str = DEFAULT_DISCLAIMER,
    clock: Callable[[], datetime] = _utcnow,
) -> SummaryDocument:
    """Template-based extractive summary: one Fact per evidence item plus one
    Trend per latest-vs-prior comparison. Pure function of (ccp, mode)."""
    sections: list[tuple[SectionKey, tuple[SummaryStatement, ...]]] = []
    for key, state, items in ccp.sections:
        stmts: list[SummaryStatement] = []
        if state is SectionState.POPULATED:
            stmts.extend(_fact_statement(i) for i in items)
            if key is SectionKey.LABORATORY_AND_VITAL_SIGNS:
                stmts.extend(_trend_statement(t) for t in ccp.trends if t.prior is not None)
        elif state is SectionState.UNAVAILABLE:
            stmts.append(
                SummaryStatement(unavailable_notice(key), key, StatementKind.MISSING_DATA)
            )
        elif mode is RenderMode.NOTICE_EMPTY:
            stmts.append(SummaryStatement(empty_notice(key), key, StatementKind.MISSING_DATA))
        if stmts:
            sections.append((key, tuple(stmts)))
    return SummaryDocument(
        patient_header=_patient_header(ccp),
        sections=tuple(sections),
        disclaimer=disclaimer,
        ccp_fingerprint=ccp.fingerprint(),
        backend=DETERMINISTIC,
        generated_at=clock(),
    )


# --- grounding validation -----------------------------------------------------

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def _tokens(text: str) -> set[str]:
    return set(_TOKEN_RE.findall(text.lower()))


def _item_tokens(item: EvidenceItem) -> set[str]:
    toks = _tokens(item.display)
    for system, code, display in item.codes:
        toks |= _tokens(code) | _tokens(display)
    for value in item.attributes.values():
        toks |= _tokens(value)
    if item.status:
        toks |= _tokens(item.status)
    toks |= _tokens(SECTION_LABELS[item.section])
    return toks


def validate_grounding(
    doc: SummaryDocument,
    ccp: ClinicalContextPackage,
    lexicon: tuple[str, ...] = DEFAULT_RECOMMENDATION_LEXICON,
) -> list[GroundingViolation]:
    """Check every statement against the context package.

    Empty result iff the document is fully grounded: all evidence refs
    resolve, numeric claims match the cited values, no recommendation
    language, and Fact text overlaps its cited evidence.
    """
    if doc.ccp_fingerprint != ccp.fingerprint():
        raise FingerprintMismatchError(
            "summary document fingerprint does not match this context package"
        )
    index = ccp.evidence_index()
    violations: list[GroundingViolation] = []
    for i, stmt in enumerate(doc.all_statements()):
        lowered = stmt.text.lower()
        for phrase in lexicon:
            if phrase in lowered:
                violations.append(
                    GroundingViolation(
                        i,
                        ViolationCategory.RECOMMENDATION_LANGUAGE,
                        f"statement contains {phrase!r}",
                    )
                )
                break
        if stmt.kind is StatementKind.MISSING_DATA:
            continue
        resolved = [index[r] for r in stmt.evidence_refs if r in index]
        dangling = [r for r in stmt.evidence_refs if r not in index]
        if dangling or not stmt.evidence_refs:
            violations.append(
                GroundingViolation(
                    i,
                    ViolationCategory.UNRESOLVED_EVIDENCE,
                    f"unresolved evidence refs: {dangling or '(none cited)'}",
                )
            )
            continue
        for value, unit, evidence_id in stmt.numeric_claims:
            item = index.get(evidence_id)
            if item is None:
                violations.append(
                    GroundingViolation(
                        i,
                        ViolationCategory.UNRESOLVED_EVIDENCE,
                        f"numeric claim cites unknown {evidence_id}",
                    )
                )
                continue
            expected = item.attributes.get("value")
            if expected is None or canonical_number(value) != canonical_number(expected):
                violations.append(
                    GroundingViolation(
                        i,
                        ViolationCategory.VALUE_MISMATCH,
                        f"claimed {value!r} but {evidence_id} carries {expected!r}",
                    )
                )
        if stmt.kind is StatementKind.FACT:
            cited_tokens = set()
            for item in resolved:
                cited_tokens |= _item_tokens(item)
            if not (_tokens(stmt.text) & cited_tokens):
                violations.append(
                    GroundingViolation(
                        i,
                        ViolationCategory.FOREIGN_CONTENT,
                        "statement text shares no tokens with its cited evidence",
                    )
                )
    return violations


# --- hosted backend -------------------------------------------------------------


class HostedAdapter:
    """POSTs {instructions, ccp} to the configured endpoint and expects
    {sections: [{key, statements: [{text, evidence_ids, numeric_claims}]}]}."""

    def __init__(self, backend: BackendKind, timeout_s: float = 30.0):
        self.backend = backend
        self.timeout_s = timeout_s

    def generate(self, request: dict) -> dict:
        import requests

        try:
            resp = requests.post(self.backend.endpoint_url, json=request, timeout=self.timeout_s)
        except requests.RequestException as exc:
            raise BackendError(f"hosted backend unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise BackendError(f"hosted backend returned HTTP {resp.status_code}")
        try:
            return resp.json()
        except ValueError as exc:
            raise BackendError("hosted backend returned non-JSON body") from exc


def _parse_backend_response(response: dict, ccp: ClinicalContextPackage):
    sections: list[tuple[SectionKey, tuple[SummaryStatement, ...]]] = []
    try:
        for sec in response["sections"]:
            key = SectionKey(sec["key"])
            stmts = []
            for raw in sec["statements"]:
                refs = tuple(raw.get("evidence_ids", []))
                claims = tuple(
                    (str(c[0]), str(c[1]), str(c[2])) for c in raw.get("numeric_claims", [])
                )
                kind = StatementKind.FACT if refs else StatementKind.MISSING_DATA
                if raw.get("kind") == "Trend":
                    kind = StatementKind.TREND
                stmts.append(
                    SummaryStatement(
                        text=str(raw["text"]),
                        section=key,
                        kind=kind,
                        evidence_refs=refs,
                        numeric_claims=claims,
                    )
                )
            sections.append((key, tuple(stmts)))
    except (KeyError, TypeError, ValueError) as exc:
        raise BackendError(f"malformed backend response: {exc}") from exc
    order = {k: i for i, k in enumerate(SectionKey)}
    sections.sort(key=lambda pair: order[pair[0]])
    return tuple(sections)


def summarize_via_backend(
    ccp: ClinicalContextPackage,
    backend: BackendKind,
    adapter=None,
    mode: RenderMode = RenderMode.NOTICE_EMPTY,
    disclaimer: str = DEFAULT_DISCLAIMER,
    lexicon: tuple[str, ...] = DEFAULT_RECOMMENDATION_LEXICON,
    clock: Callable[[], datetime] = _utcnow,
) -> SummaryDocument:
    """Summarize through a hosted generative endpoint, enforcing the grounding
    validator. Any violation (or a malformed/unreachable backend) falls back
    to the deterministic rendering with the violations recorded."""
    if backend.kind == "deterministic":
        return summarize_deterministic(ccp, mode, disclaimer, clock)
    adapter = adapter or HostedAdapter(backend)
    request = {"instructions": GUARDRAIL_INSTRUCTIONS, "ccp": ccp.to_dict()}
    try:
        response = adapter.generate(request)
        sections = _parse_backend_response(response, ccp)
    except BackendError as exc:
        fallback = summarize_deterministic(ccp, mode, disclaimer, clock)
        return SummaryDocument(
            **{**fallback.__dict__, "fallback_violations": (f"BackendError: {exc}",)}
        )
    doc = SummaryDocument(
        patient_header=_patient_header(ccp),
        sections=sections,
        disclaimer=disclaimer,
        ccp_fingerprint=ccp.fingerprint(),
        backend=backend,
        generated_at=clock(),
    )
    violations = validate_grounding(doc, ccp, lexicon)
    if violations:
        fallback = summarize_deterministic(ccp, mode, disclaimer, clock)
        notes = tuple(f"{v.category.value}: {v.detail}" for v in violations)
        return SummaryDocument(**{**fallback.__dict__, "fallback_violations": notes})
    return doc


# --- renderings -------------------------------------------------------------------


def render_text(doc: SummaryDocument) -> str:
    lines = [doc.patient_header, ""]
    for key, stmts in doc.sections:
        lines.append(SECTION_LABELS[key])
        lines.append("-" * len(SECTION_LABELS[key]))
        for s in stmts:
            lines.append(s.text)
        lines.append("")
    lines.append(doc.disclaimer)
    return "\n".join(lines) + "\n"


def render_markdown(doc: SummaryDocument) -> str:
    lines = [f"# {doc.patient_header}", ""]
    for key, stmts in doc.sections:
        lines.append(f"## {SECTION_LABELS[key]}")
        lines.append("")
        for s in stmts:
            lines.append(f"- {s.text}")
        lines.append("")
    lines.append(f"*{doc.disclaimer}*")
    return "\n".join(lines) + "\n"


# --- grounded Q&A -------------------------------------------------------------------

_STOPWORDS = {
    "a", "an", "and", "any", "are", "at", "be", "can", "do", "does", "for",
    "from", "has", "have", "how", "in", "is", "it", "me", "my", "of", "on",
    "or", "patient", "patients", "please", "s", "show", "tell", "the",
    "their", "there", "this", "to", "was", "were", "what", "when", "which",
    "who", "why", "with", "you",
}

_TEMPORAL_QUALIFIERS = {"recent", "latest", "last", "newest", "current", "most"}

# Lexical expansions for common scenario classes so that questions phrased in
# drug-class or shorthand terms still hit coded evidence.
QUESTION_SYNONYMS: dict[str, set[str]] = {
    "a1c": {"hba1c", "hemoglobin"},
    "hba1c": {"a1c", "hemoglobin"},
    "anticoagulant": {
        "warfarin", "apixaban", "rivaroxaban", "dabigatran", "edoxaban",
        "heparin", "enoxaparin",
    },
    "anticoagulants": {
        "warfarin", "apixaban", "rivaroxaban", "dabigatran", "edoxaban",
        "heparin", "enoxaparin",
    },
    "admission": {"encounter", "inpatient", "admitted"},
    "admissions": {"encounter", "inpatient", "admitted"},
    "meds": {"medications", "medication"},
    "problems": {"conditions", "condition"},
    "labs": {"laboratory"},
    "vitals": {"vital", "signs"},
    "allergy": {"allergies"},
}

REFUSAL_TEXT = "The retrieved context does not contain information matching this question."


def answer_question(
    ccp: ClinicalContextPackage, question: str, max_items: int = 3
) -> GroundedAnswer:
    """Deterministic lexical retrieval over the context package. Never
    fabricates: answer text is template-rendered evidence or a refusal."""
    if not question.strip():
        raise ValueError("question must be non-empty")
    raw_tokens = _tokens(question)
    temporal = bool(raw_tokens & _TEMPORAL_QUALIFIERS)
    content = raw_tokens - _STOPWORDS - _TEMPORAL_QUALIFIERS
    expanded = set(content)
    for tok in content:
        expanded |= QUESTION_SYNONYMS.get(tok, set())
    if not expanded:
        return GroundedAnswer(REFUSAL_TEXT, (), True, "no searchable terms in question")

    scored: list[tuple[int, EvidenceItem]] = []
    for item in ccp.all_items():
        overlap = len(expanded & _item_tokens(item))
        if overlap > 0:
            scored.append((overlap, item))
    if not scored:
        return GroundedAnswer(REFUSAL_TEXT, (), True, "no matching evidence in context")

    best = max(s for s, _ in scored)
    top = [item for s, item in scored if s == best]
    if temporal:
        dated = [i for i in top if i.effective_at is not None]
        pool = dated or top
        pool.sort(key=lambda i: (i.effective_at or datetime.min.replace(tzinfo=timezone.utc), i.evidence_id), reverse=True)
        selected = pool[:1]
    else:
        top.sort(
            key=lambda i: (
                i.effective_at or datetime.min.replace(tzinfo=timezone.utc),
                i.evidence_id,
            ),
            reverse=True,
        )
        selected = top[:max_items]
    text = "; ".join(render_fact(i) for i in selected)
    return GroundedAnswer(text, tuple(i.evidence_id for i in selected), False)
