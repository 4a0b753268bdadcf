"""Normalization of raw FHIR resources into the clinical context package.

The context package (CCP) is the stable intermediate representation between
retrieval and summarization: topic-grouped, timestamp-anchored, deduplicated,
with stable section headers and a unique evidence id per item so that summary
statements can cite their support.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from typing import Callable, Optional

from .fhir_client import (
    FetchState,
    RawResourceRecord,
    ResourceType,
    RetrievalReport,
    _iso,
    _parse_iso,
    _utcnow,
)

SCHEMA_VERSION = "1.0"


class SectionKey(Enum):
    """Closed, ordered section set; the order is the rendering order."""

    PATIENT_INFORMATION = "PatientInformation"
    ALERTS_AND_FLAGS = "AlertsAndFlags"
    ALLERGIES_AND_INTOLERANCES = "AllergiesAndIntolerances"
    CONDITIONS = "Conditions"
    MEDICATIONS = "Medications"
    LABORATORY_AND_VITAL_SIGNS = "LaboratoryAndVitalSigns"
    PROCEDURES = "Procedures"
    ENCOUNTERS = "Encounters"
    DIAGNOSTIC_REPORTS = "DiagnosticReports"
    IMAGING_STUDIES = "ImagingStudies"
    IMMUNIZATIONS = "Immunizations"
    FAMILY_HISTORY = "FamilyHistory"
    CARE_PLANS = "CarePlans"
    GOALS = "Goals"
    DEVICES = "Devices"
    CONSENT = "Consent"


SECTION_LABELS: dict[SectionKey, str] = {
    SectionKey.PATIENT_INFORMATION: "Patient Information",
    SectionKey.ALERTS_AND_FLAGS: "Alerts and Flags",
    SectionKey.ALLERGIES_AND_INTOLERANCES: "Allergies and Intolerances",
    SectionKey.CONDITIONS: "Conditions",
    SectionKey.MEDICATIONS: "Medications",
    SectionKey.LABORATORY_AND_VITAL_SIGNS: "Laboratory and Vital Signs",
    SectionKey.PROCEDURES: "Procedures",
    SectionKey.ENCOUNTERS: "Encounters",
    SectionKey.DIAGNOSTIC_REPORTS: "Diagnostic Reports",
    SectionKey.IMAGING_STUDIES: "Imaging Studies",
    SectionKey.IMMUNIZATIONS: "Immunizations",
    SectionKey.FAMILY_HISTORY: "Family History",
    SectionKey.CARE_PLANS: "Care Plans",
    SectionKey.GOALS: "Goals",
    SectionKey.DEVICES: "Devices",
    SectionKey.CONSENT: "Consent",
}

# Composition is an organizing scaffold, not a section: it lands in package
# metadata instead.
RESOURCE_TO_SECTION: dict[ResourceType, SectionKey] = {
    ResourceType.PATIENT: SectionKey.PATIENT_INFORMATION,
    ResourceType.FLAG: SectionKey.ALERTS_AND_FLAGS,
    ResourceType.ALLERGY_INTOLERANCE: SectionKey.ALLERGIES_AND_INTOLERANCES,
    ResourceType.CONDITION: SectionKey.CONDITIONS,
    ResourceType.MEDICATION_REQUEST: SectionKey.MEDICATIONS,
    ResourceType.OBSERVATION: SectionKey.LABORATORY_AND_VITAL_SIGNS,
    ResourceType.PROCEDURE: SectionKey.PROCEDURES,
    ResourceType.ENCOUNTER: SectionKey.ENCOUNTERS,
    ResourceType.DIAGNOSTIC_REPORT: SectionKey.DIAGNOSTIC_REPORTS,
    ResourceType.IMAGING_STUDY: SectionKey.IMAGING_STUDIES,
    ResourceType.IMMUNIZATION: SectionKey.IMMUNIZATIONS,
    ResourceType.FAMILY_MEMBER_HISTORY: SectionKey.FAMILY_HISTORY,
    ResourceType.CARE_PLAN: SectionKey.CARE_PLANS,
    ResourceType.GOAL: SectionKey.GOALS,
    ResourceType.DEVICE: SectionKey.DEVICES,
    ResourceType.CONSENT: SectionKey.CONSENT,
}

SECTION_TO_RESOURCES: dict[SectionKey, list[ResourceType]] = {}
for _rt, _sk in RESOURCE_TO_SECTION.items():
    SECTION_TO_RESOURCES.setdefault(_sk, []).append(_rt)


class SectionState(Enum):
    POPULATED = "Populated"
    EMPTY = "Empty"
    UNAVAILABLE = "Unavailable"


class MissingAnchorError(Exception):
    """No Patient record among the inputs; nothing anchors the package."""


@dataclass(frozen=True)
class EvidenceItem:
    evidence_id: str
    section: SectionKey
    resource_type: ResourceType
    display: str
    codes: tuple[tuple[str, str, str], ...] = ()  # (system, code, display)
    effective_at: Optional[datetime] = None
    status: Optional[str] = None
    attributes: dict[str, str] = field(default_factory=dict)
    duplicate_count: int = 1
    source_url: str = ""

    def primary_code(self) -> Optional[tuple[str, str]]:
        if self.codes:
            system, code, _ = self.codes[0]
            return (system, code)
        return None

    def to_dict(self) -> dict:
        return {
            "evidence_id": self.evidence_id,
            "section": self.section.value,
            "resource_type": self.resource_type.value,
            "display": self.display,
            "codes": [list(c) for c in self.codes],
            "effective_at": _iso(self.effective_at) if self.effective_at else None,
            "status": self.status,
            "attributes": dict(sorted(self.attributes.items())),
            "duplicate_count": self.duplicate_count,
            "source_url": self.source_url,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvidenceItem":
        return cls(
            evidence_id=d["evidence_id"],
            section=SectionKey(d["section"]),
            resource_type=ResourceType.from_name(d["resource_type"]),
            display=d["display"],
            codes=tuple(tuple(c) for c in d.get("codes", [])),
            effective_at=_parse_iso(d["effective_at"]) if d.get("effective_at") else None,
            status=d.get("status"),
            attributes=dict(d.get("attributes", {})),
            duplicate_count=d.get("duplicate_count", 1),
            source_url=d.get("source_url", ""),
        )


@dataclass(frozen=True)
class TrendEntry:
    code: tuple[str, str, str]
    latest: tuple[datetime, float, str]  # (instant, value, unit)
    prior: Optional[tuple[datetime, float, str]]
    direction: str  # Rising | Falling | Flat | Single
    latest_evidence_id: str
    prior_evidence_id: Optional[str]

    def to_dict(self) -> dict:
        def point(p):
            return {"instant": _iso(p[0]), "value": p[1], "unit": p[2]}

        return {
            "code": list(self.code),
            "latest": point(self.latest),
            "prior": point(self.prior) if self.prior else None,
            "direction": self.direction,
            "latest_evidence_id": self.latest_evidence_id,
            "prior_evidence_id": self.prior_evidence_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrendEntry":
        def point(p):
            return (_parse_iso(p["instant"]), p["value"], p["unit"]) if p else None

        return cls(
            code=tuple(d["code"]),
            latest=point(d["latest"]),
            prior=point(d.get("prior")),
            direction=d["direction"],
            latest_evidence_id=d["latest_evidence_id"],
            prior_evidence_id=d.get("prior_evidence_id"),
        )


@dataclass(frozen=True)
class ClinicalContextPackage:
    patient: EvidenceItem
    sections: tuple[tuple[SectionKey, SectionState, tuple[EvidenceItem, ...]], ...]
    trends: tuple[TrendEntry, ...]
    retrieval_report: RetrievalReport
    built_at: datetime
    warnings: tuple[str, ...] = ()
    metadata: dict = field(default_factory=dict)
    schema_version: str = SCHEMA_VERSION

    def section(self, key: SectionKey) -> tuple[SectionState, tuple[EvidenceItem, ...]]:
        for k, state, items in self.sections:
            if k is key:
                return state, items
        raise KeyError(key)

    def all_items(self) -> list[EvidenceItem]:
        return [item for _, _, items in self.sections for item in items]

    def find_evidence(self, evidence_id: str) -> Optional[EvidenceItem]:
        return self.evidence_index().get(evidence_id)

    def evidence_index(self) -> dict[str, EvidenceItem]:
        return {item.evidence_id: item for item in self.all_items()}

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "patient": self.patient.to_dict(),
            "sections": [
                {
                    "key": key.value,
                    "state": state.value,
                    "items": [i.to_dict() for i in items],
                }
                for key, state, items in self.sections
            ],
            "trends": [t.to_dict() for t in self.trends],
            "retrieval_report": self.retrieval_report.to_dict(),
            "built_at": _iso(self.built_at),
            "warnings": list(self.warnings),
            "metadata": self.metadata,
        }

    def to_json(self, indent: Optional[int] = None) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=indent)

    def fingerprint(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    @classmethod
    def from_dict(cls, d: dict) -> "ClinicalContextPackage":
        return cls(
            patient=EvidenceItem.from_dict(d["patient"]),
            sections=tuple(
                (
                    SectionKey(s["key"]),
                    SectionState(s["state"]),
                    tuple(EvidenceItem.from_dict(i) for i in s["items"]),
                )
                for s in d["sections"]
            ),
            trends=tuple(TrendEntry.from_dict(t) for t in d["trends"]),
            retrieval_report=RetrievalReport.from_dict(d["retrieval_report"]),
            built_at=_parse_iso(d["built_at"]),
            warnings=tuple(d.get("warnings", [])),
            metadata=d.get("metadata", {}),
            schema_version=d.get("schema_version", SCHEMA_VERSION),
        )

    @classmethod
    def from_json(cls, text: str) -> "ClinicalContextPackage":
        return cls.from_dict(json.loads(text))


# --- timestamp extraction ---------------------------------------------------

# Per-type precedence of date-bearing fields; dotted paths descend into
# sub-objects.
_TIMESTAMP_PRECEDENCE: dict[ResourceType, list[str]] = {
    ResourceType.OBSERVATION: ["effectiveDateTime", "effectivePeriod.start", "issued"],
    ResourceType.CONDITION: ["onsetDateTime", "recordedDate"],
    ResourceType.MEDICATION_REQUEST: ["authoredOn"],
    ResourceType.ENCOUNTER: ["period.start"],
    ResourceType.PROCEDURE: ["performedDateTime", "performedPeriod.start"],
    ResourceType.DIAGNOSTIC_REPORT: ["effectiveDateTime", "issued"],
    ResourceType.IMMUNIZATION: ["occurrenceDateTime"],
    ResourceType.ALLERGY_INTOLERANCE: ["onsetDateTime", "recordedDate"],
    ResourceType.FAMILY_MEMBER_HISTORY: ["date"],
    ResourceType.CARE_PLAN: ["period.start", "created"],
    ResourceType.GOAL: ["startDate"],
    ResourceType.FLAG: ["period.start"],
    ResourceType.CONSENT: ["dateTime"],
    ResourceType.IMAGING_STUDY: ["started"],
    ResourceType.COMPOSITION: ["date"],
}

_GENERIC_DATE_FIELDS = [
    "effectiveDateTime",
    "occurrenceDateTime",
    "performedDateTime",
    "onsetDateTime",
    "authoredOn",
    "recordedDate",
    "dateTime",
    "date",
    "started",
    "startDate",
    "issued",
    "period.start",
]


def parse_fhir_instant(value: str) -> Optional[datetime]:
    """Parse a FHIR date/dateTime/instant. Partial dates (YYYY, YYYY-MM)
    normalize to the first instant of the period, in UTC. None on failure."""
    if not isinstance(value, str) or not value:
        return None
    text = value.strip()
    try:
        if len(text) == 4 and text.isdigit():
            return datetime(int(text), 1, 1, tzinfo=timezone.utc)
        if len(text) == 7 and text[4] == "-":
            return datetime(int(text[:4]), int(text[5:7]), 1, tzinfo=timezone.utc)
        dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError:
        return None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def _dig(payload: dict, path: str):
    cur = payload
    for part in path.split("."):
        if not isinstance(cur, dict):
            return None
        cur = cur.get(part)
    return cur


def extract_timestamp(record: RawResourceRecord) -> Optional[datetime]:
    """Best-available event timestamp per the per-type precedence chain."""
    paths = _TIMESTAMP_PRECEDENCE.get(record.resource_type, []) + _GENERIC_DATE_FIELDS
    seen = set()
    for path in paths:
        if path in seen:
            continue
        seen.add(path)
        raw = _dig(record.payload, path)
        if isinstance(raw, str):
            parsed = parse_fhir_instant(raw)
            if parsed is not None:
                return parsed
    return None


# --- display / attributes ---------------------------------------------------

_PRIMARY_CONCEPT_FIELD: dict[ResourceType, str] = {
    ResourceType.CONDITION: "code",
    ResourceType.OBSERVATION: "code",
    ResourceType.PROCEDURE: "code",
    ResourceType.DIAGNOSTIC_REPORT: "code",
    ResourceType.FLAG: "code",
    ResourceType.ALLERGY_INTOLERANCE: "code",
    ResourceType.IMMUNIZATION: "vaccineCode",
    ResourceType.MEDICATION_REQUEST: "medicationCodeableConcept",
    ResourceType.DEVICE: "type",
    ResourceType.FAMILY_MEMBER_HISTORY: "relationship",
    ResourceType.CONSENT: "scope",
    ResourceType.GOAL: "description",
}


def canonical_number(value) -> str:
    """Canonical string for a numeric value so that claims and evidence
    compare string-equal (7.20 and 7.2 render identically)."""
    try:
        f = float(value)
    except (TypeError, ValueError):
        return str(value)
    if math.isfinite(f) and f == int(f) and abs(f) < 1e15:
        return str(int(f))
    return repr(f)


def _concept_codes(concept: dict) -> tuple[tuple[str, str, str], ...]:
    codes = []
    for coding in concept.get("coding", []) or []:
        if isinstance(coding, dict) and coding.get("code"):
            codes.append(
                (str(coding.get("system", "")), str(coding["code"]), str(coding.get("display", "")))
            )
    return tuple(codes)


def _concept_display(concept: dict, fallback: str) -> str:
    for coding in concept.get("coding", []) or []:
        if isinstance(coding, dict) and coding.get("display"):
            return str(coding["display"])
    if concept.get("text"):
        return str(concept["text"])
    for coding in concept.get("coding", []) or []:
        if isinstance(coding, dict) and coding.get("code"):
            return str(coding["code"])
    return fallback


def _coded_status(payload: dict, field_name: str) -> Optional[str]:
    value = payload.get(field_name)
    if isinstance(value, dict):
        for coding in value.get("coding", []) or []:
            if isinstance(coding, dict) and coding.get("code"):
                return str(coding["code"])
        return value.get("text")
    if isinstance(value, str):
        return value
    return None


def _patient_display(payload: dict) -> str:
    for name in payload.get("name", []) or []:
        if not isinstance(name, dict):
            continue
        family = name.get("family", "")
        given = " ".join(name.get("given", []) or [])
        label = ", ".join(p for p in (family, given) if p)
        if label:
            return label
    return f"Patient {payload.get('id', '')}".strip()


def _extract_attributes(record: RawResourceRecord) -> tuple[dict[str, str], Optional[str]]:
    """Type-specific scalar facts plus the item-level status, when present."""
    p = record.payload
    attrs: dict[str, str] = {}
    status: Optional[str] = None
    rt = record.resource_type

    if rt is ResourceType.PATIENT:
        if p.get("gender"):
            attrs["gender"] = str(p["gender"])
        if p.get("birthDate"):
            attrs["birth_date"] = str(p["birthDate"])
    elif rt is ResourceType.OBSERVATION:
        status = p.get("status")
        vq = p.get("valueQuantity")
        if isinstance(vq, dict) and vq.get("value") is not None:
            attrs["value"] = canonical_number(vq["value"])
            if vq.get("unit"):
                attrs["unit"] = str(vq["unit"])
        elif p.get("valueString") is not None:
            attrs["value"] = str(p["valueString"])
        elif isinstance(p.get("valueCodeableConcept"), dict):
            attrs["value"] = _concept_display(p["valueCodeableConcept"], "")
        categories = []
        for cat in p.get("category", []) or []:
            if isinstance(cat, dict):
                for coding in cat.get("coding", []) or []:
                    if isinstance(coding, dict) and coding.get("code"):
                        categories.append(str(coding["code"]))
        if categories:
            attrs["category"] = ",".join(sorted(set(categories)))
    elif rt is ResourceType.MEDICATION_REQUEST:
        status = p.get("status")
        if p.get("intent"):
            attrs["intent"] = str(p["intent"])
        dosages = p.get("dosageInstruction", []) or []
        if dosages and isinstance(dosages[0], dict) and dosages[0].get("text"):
            attrs["dose"] = str(dosages[0]["text"])
    elif rt is ResourceType.ALLERGY_INTOLERANCE:
        status = _coded_status(p, "clinicalStatus")
        if p.get("criticality"):
            attrs["criticality"] = str(p["criticality"])
    elif rt is ResourceType.CONDITION:
        status = _coded_status(p, "clinicalStatus")
    elif rt is ResourceType.FLAG:
        status = p.get("status")
        period = p.get("period")
        if isinstance(period, dict) and (period.get("start") or period.get("end")):
            attrs["period"] = f"{period.get('start', '')}/{period.get('end', '')}"
    elif rt is ResourceType.ENCOUNTER:
        status = p.get("status")
        klass = p.get("class")
        if isinstance(klass, dict) and klass.get("code"):
            attrs["class"] = str(klass["code"])
        period = p.get("period")
        if isinstance(period, dict):
            if period.get("start"):
                attrs["period_start"] = str(period["start"])
            if period.get("end"):
                attrs["period_end"] = str(period["end"])
    else:
        raw_status = p.get("status")
        if isinstance(raw_status, str):
            status = raw_status
    return attrs, status


def normalize_record(record: RawResourceRecord) -> EvidenceItem:
    """One raw resource to one evidence item. Composition records are handled
    by build_context_package, not here."""
    if record.resource_type is ResourceType.COMPOSITION:
        raise ValueError("Composition records are package metadata, not evidence items")
    p = record.payload
    rt = record.resource_type

    if rt is ResourceType.PATIENT:
        display = _patient_display(p)
        codes: tuple[tuple[str, str, str], ...] = ()
    else:
        concept_field = _PRIMARY_CONCEPT_FIELD.get(rt)
        concept = p.get(concept_field) if concept_field else None
        if not isinstance(concept, dict):
            # Encounter and others without a primary CodeableConcept fall back
            # to a type-shaped concept source.
            if rt is ResourceType.ENCOUNTER:
                types = p.get("type", []) or []
                concept = types[0] if types and isinstance(types[0], dict) else {}
            elif rt is ResourceType.CARE_PLAN:
                if p.get("title"):
                    concept = {"text": p["title"]}
                else:
                    cats = p.get("category", []) or []
                    concept = cats[0] if cats and isinstance(cats[0], dict) else {}
            elif rt is ResourceType.IMAGING_STUDY:
                concept = {"text": p.get("description", "")} if p.get("description") else {}
            else:
                concept = {}
        display = _concept_display(concept, f"Unlabeled {rt.value}")
        codes = _concept_codes(concept)

    attrs, status = _extract_attributes(record)
    effective = extract_timestamp(record)
    return EvidenceItem(
        evidence_id=f"{rt.value}/{record.source_id}",
        section=RESOURCE_TO_SECTION[rt],
        resource_type=rt,
        display=display,
        codes=codes,
        effective_at=effective,
        status=status,
        attributes=attrs,
        duplicate_count=1,
        source_url=record.source_url,
    )


# --- dedup / trends ----------------------------------------------------------


def _dedup_key(item: EvidenceItem):
    """Items collapse only when they describe the same coded fact on the same
    day with the same status and the same scalar value (so conflicting
    observations with different values are both retained)."""
    code = item.primary_code()
    if code is None:
        return None
    day = item.effective_at.date().isoformat() if item.effective_at else None
    value_sig = (
        item.attributes.get("value"),
        item.attributes.get("unit"),
        item.attributes.get("dose"),
    )
    return (item.section.value, code, day, item.status, value_sig)


def deduplicate(items: list[EvidenceItem]) -> list[EvidenceItem]:
    """Collapse repeat entries within one section.

    The most recent member (by full timestamp) survives; its duplicate_count
    is the sum over the group, and the collapsed evidence ids are kept in the
    survivor's attributes. Uncoded items never collapse. Idempotent.
    """
    groups: dict = {}
    order: list = []
    for idx, item in enumerate(items):
        key = _dedup_key(item)
        if key is None:
            key = ("__uncoded__", idx)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append((idx, item))

    out: list[EvidenceItem] = []
    for key in order:
        members = groups[key]
        if len(members) == 1:
            out.append(members[0][1])
            continue
        # Newest full timestamp wins; ties resolved by input position.
        survivor_idx, survivor = max(
            members,
            key=lambda pair: (
                pair[1].effective_at or datetime.min.replace(tzinfo=timezone.utc),
                -pair[0],
            ),
        )
        total = sum(m.duplicate_count for _, m in members)
        collapsed = [m.evidence_id for _, m in members if m.evidence_id != survivor.evidence_id]
        prior_collapsed = survivor.attributes.get("collapsed_ids", "")
        merged = ",".join(
            [c for c in prior_collapsed.split(",") if c]
            + [
                c
                for _, m in members
                if m.evidence_id != survivor.evidence_id
                for c in [m.evidence_id] + [x for x in m.attributes.get("collapsed_ids", "").split(",") if x]
            ]
        )
        attrs = dict(survivor.attributes)
        if merged:
            attrs["collapsed_ids"] = merged
        out.append(replace(survivor, duplicate_count=total, attributes=attrs))
    return out


def _trend_direction(latest: float, prior: float) -> str:
    if math.isclose(latest, prior, rel_tol=1e-9, abs_tol=1e-12):
        return "Flat"
    return "Rising" if latest > prior else "Falling"


def compute_trends(lab_items: list[EvidenceItem]) -> list[TrendEntry]:
    """Latest-vs-prior comparison per lab/vital code. Non-numeric or undated
    values are excluded; a prior must be strictly older than the latest."""
    by_code: dict[tuple[str, str], list[EvidenceItem]] = {}
    code_order: list[tuple[str, str]] = []
    for item in lab_items:
        code = item.primary_code()
        if code is None or item.effective_at is None:
            continue
        try:
            float(item.attributes.get("value", ""))
        except (TypeError, ValueError):
            continue
        if code not in by_code:
            by_code[code] = []
            code_order.append(code)
        by_code[code].append(item)

    trends: list[TrendEntry] = []
    for code in code_order:
        members = sorted(
            by_code[code], key=lambda i: (i.effective_at, i.evidence_id), reverse=True
        )
        latest_item = members[0]
        latest_val = float(latest_item.attributes["value"])
        unit = latest_item.attributes.get("unit", "")
        prior_item = next(
            (m for m in members[1:] if m.effective_at < latest_item.effective_at), None
        )
        display = latest_item.display
        code_triple = (code[0], code[1], display)
        if prior_item is None:
            trends.append(
                TrendEntry(
                    code=code_triple,
                    latest=(latest_item.effective_at, latest_val, unit),
                    prior=None,
                    direction="Single",
                    latest_evidence_id=latest_item.evidence_id,
                    prior_evidence_id=None,
                )
            )
        else:
            prior_val = float(prior_item.attributes["value"])
            trends.append(
                TrendEntry(
                    code=code_triple,
                    latest=(latest_item.effective_at, latest_val, unit),
                    prior=(prior_item.effective_at, prior_val, prior_item.attributes.get("unit", "")),
                    direction=_trend_direction(latest_val, prior_val),
                    latest_evidence_id=latest_item.evidence_id,
                    prior_evidence_id=prior_item.evidence_id,
                )
            )
    return trends


def _sort_section(items: list[EvidenceItem]) -> list[EvidenceItem]:
    dated = [i for i in items if i.effective_at is not None]
    undated = [i for i in items if i.effective_at is None]
    dated.sort(key=lambda i: (i.effective_at, i.evidence_id), reverse=True)
    return dated + undated


def build_context_package(
    records: list[RawResourceRecord],
    report: RetrievalReport,
    clock: Callable[[], datetime] = _utcnow,
) -> ClinicalContextPackage:
    """Normalize, group, sort, deduplicate, and compute trends.

    Raises MissingAnchorError when no Patient record is present. The result is
    an immutable value; identical inputs (including the injected clock)
    serialize byte-identically.
    """
    warnings: list[str] = []
    metadata: dict = {}

    patient_records = [r for r in records if r.resource_type is ResourceType.PATIENT]
    if not patient_records:
        raise MissingAnchorError("no Patient record among inputs")
    if len(patient_records) > 1:
        warnings.append(f"{len(patient_records)} Patient records; using the first")

    compositions = [r for r in records if r.resource_type is ResourceType.COMPOSITION]
    if compositions:
        metadata["compositions"] = [
            {"source_id": r.source_id, "title": r.payload.get("title", "")}
            for r in compositions
        ]

    skipped = 0
    by_section: dict[SectionKey, list[EvidenceItem]] = {k: [] for k in SectionKey}
    seen_ids: dict[str, int] = {}
    anchor: Optional[EvidenceItem] = None
    for record in records:
        if record.resource_type is ResourceType.COMPOSITION:
            continue
        if record.resource_type is ResourceType.PATIENT and record is not patient_records[0]:
            continue
        payload = record.payload
        if not payload.get("resourceType") or not payload.get("id"):
            warnings.append(
                f"{record.resource_type.value} record missing resourceType or id; skipped"
            )
            skipped += 1
            continue
        item = normalize_record(record)
        # Uniquify colliding evidence ids with a #n suffix.
        n = seen_ids.get(item.evidence_id)
        if n is None:
            seen_ids[item.evidence_id] = 1
        else:
            seen_ids[item.evidence_id] = n + 1
            item = replace(item, evidence_id=f"{item.evidence_id}#{n}")
            seen_ids[item.evidence_id] = 1
        if record.resource_type is ResourceType.PATIENT:
            anchor = item
        by_section[item.section].append(item)
    metadata["skipped_records"] = skipped

    sections: list[tuple[SectionKey, SectionState, tuple[EvidenceItem, ...]]] = []
    lab_items: list[EvidenceItem] = []
    for key in SectionKey:
        items = deduplicate(_sort_section(by_section[key]))
        items = _sort_section(items)
        backing = SECTION_TO_RESOURCES[key]
        if items:
            state = SectionState.POPULATED
        elif all(
            report.status_for(rt).state in (FetchState.UNSUPPORTED, FetchState.ERROR)
            for rt in backing
        ):
            state = SectionState.UNAVAILABLE
        else:
            state = SectionState.EMPTY
        if key is SectionKey.LABORATORY_AND_VITAL_SIGNS:
            lab_items = list(items)
        sections.append((key, state, tuple(items)))

    assert anchor is not None
    return ClinicalContextPackage(
        patient=anchor,
        sections=tuple(sections),
        trends=tuple(compute_trends(lab_items)),
        retrieval_report=report,
        built_at=clock(),
        warnings=tuple(warnings),
        metadata=metadata,
    )
