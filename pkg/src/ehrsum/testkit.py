"""Synthetic vendor-variant patient data and an in-process FHIR-compatible
source.

Everything here is deterministic in (seed, profile) so property suites can
freeze oracle values. The mock source speaks the same retrieval interface as
the network client (search pagination at page size 2, direct Patient read),
optionally over loopback HTTP.
"""

from __future__ import annotations

import json
import random
import threading
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional
from urllib.parse import parse_qs, urlsplit, urlencode

from .fhir_client import ResourceType, TransportResponse

MOCK_BASE_URL = "http://mock.local/fhir"
MOCK_PAGE_SIZE = 2

SNOMED = "http://snomed.info/sct"
LOINC = "http://loinc.org"
RXNORM = "http://www.nlm.nih.gov/research/umls/rxnorm"
CVX = "http://hl7.org/fhir/sid/cvx"

CONDITION_VOCAB = [
    (SNOMED, "44054006", "Type 2 diabetes mellitus", "active"),
    (SNOMED, "38341003", "Hypertensive disorder", "active"),
    (SNOMED, "195967001", "Asthma", "resolved"),
]
LAB_VOCAB = [
    (LOINC, "4548-4", "Hemoglobin A1c/Hemoglobin.total in Blood", "%"),
    (LOINC, "2160-0", "Creatinine [Mass/volume] in Serum or Plasma", "mg/dL"),
    (LOINC, "8480-6", "Systolic blood pressure", "mm[Hg]"),
]
MED_VOCAB = [
    (RXNORM, "197361", "Lisinopril 10 MG Oral Tablet", "One tablet daily"),
    (RXNORM, "855332", "Warfarin Sodium 5 MG Oral Tablet", "One tablet daily in the evening"),
    (RXNORM, "860975", "Metformin hydrochloride 500 MG Oral Tablet", "One tablet twice daily"),
]
ALLERGY_VOCAB = [(SNOMED, "373270004", "Penicillin", "high")]
PROCEDURE_VOCAB = [
    (SNOMED, "80146002", "Appendectomy"),
    (SNOMED, "399208008", "Plain chest X-ray"),
]
IMMUNIZATION_VOCAB = [(CVX, "140", "Influenza, seasonal, injectable, preservative free")]


@dataclass(frozen=True)
class VariabilityProfile:
    """Knobs for vendor-variant synthetic data and source misbehavior."""

    seed: int = 0
    populated_types: frozenset = frozenset(rt for rt in ResourceType)
    duplicate_order_count: int = 0
    conflicting_obs: bool = False
    lab_history_length: int = 0
    unsupported_searches: frozenset = frozenset()
    not_found_types: frozenset = frozenset()
    flaky_5xx_rate: float = 0.0

    def __post_init__(self):
        if ResourceType.PATIENT not in self.populated_types:
            raise ValueError("Patient must always be populated")
        if not 0.0 <= self.flaky_5xx_rate < 1.0:
            raise ValueError("flaky_5xx_rate must be in [0, 1)")


def named_profile(name: str, seed: int = 0) -> VariabilityProfile:
    all_types = frozenset(rt for rt in ResourceType)
    profiles = {
        "baseline": VariabilityProfile(seed=seed, populated_types=all_types),
        "sparse": VariabilityProfile(
            seed=seed,
            populated_types=frozenset({ResourceType.PATIENT, ResourceType.CONDITION}),
        ),
        "missing-resources": VariabilityProfile(
            seed=seed,
            populated_types=frozenset(
                {
                    ResourceType.PATIENT,
                    ResourceType.CONDITION,
                    ResourceType.OBSERVATION,
                    ResourceType.MEDICATION_REQUEST,
                }
            ),
            unsupported_searches=frozenset({ResourceType.DEVICE, ResourceType.IMMUNIZATION}),
        ),
        "conflicting-observations": VariabilityProfile(
            seed=seed, populated_types=all_types, conflicting_obs=True
        ),
        "duplicate-medications": VariabilityProfile(
            seed=seed, populated_types=all_types, duplicate_order_count=3
        ),
        "longitudinal-labs": VariabilityProfile(
            seed=seed, populated_types=all_types, lab_history_length=200
        ),
    }
    if name not in profiles:
        raise ValueError(f"unknown profile {name!r}; choose from {sorted(profiles)}")
    return profiles[name]


PROFILE_NAMES = (
    "baseline",
    "sparse",
    "missing-resources",
    "conflicting-observations",
    "duplicate-medications",
    "longitudinal-labs",
)


@dataclass
class SyntheticBundleSet:
    patient_id: str
    resources: dict[ResourceType, list[dict]]
    manifest: dict


def _ref(patient_id: str) -> dict:
    return {"reference": f"Patient/{patient_id}"}


def _concept(system: str, code: str, display: str) -> dict:
    return {"coding": [{"system": system, "code": code, "display": display}], "text": display}


def _day(base: datetime, offset_days: int) -> str:
    return (base + timedelta(days=offset_days)).strftime("%Y-%m-%dT%H:%M:%SZ")


def generate_patient(
    profile: VariabilityProfile, patient_id: Optional[str] = None
) -> SyntheticBundleSet:
    """Deterministic synthetic patient. The manifest records every seeded
    ground truth (counts, max-date lab values, dedup groups) and is verified
    against the emitted JSON before returning."""
    rng = random.Random(profile.seed)
    pid = patient_id or f"pt-{profile.seed}"
    base = datetime(2023, 1, 10, 8, 0, tzinfo=timezone.utc)
    resources: dict[ResourceType, list[dict]] = {rt: [] for rt in ResourceType}
    manifest: dict = {"patient_id": pid, "counts": {}, "lab_series": {}, "dedup_groups": []}

    given = rng.choice(["Alex", "Jordan", "Sam", "Riley", "Casey"])
    family = rng.choice(["Rivera", "Chen", "Okafor", "Novak", "Hassan"])
    birth_year = rng.randint(1940, 1995)
    resources[ResourceType.PATIENT].append(
        {
            "resourceType": "Patient",
            "id": pid,
            "name": [{"family": family, "given": [given]}],
            "gender": rng.choice(["female", "male"]),
            "birthDate": f"{birth_year}-{rng.randint(1, 12):02d}-{rng.randint(1, 28):02d}",
        }
    )

    def populated(rt: ResourceType) -> bool:
        return rt in profile.populated_types

    if populated(ResourceType.CONDITION):
        for i, (system, code, display, status) in enumerate(CONDITION_VOCAB[: rng.randint(2, 3)]):
            resources[ResourceType.CONDITION].append(
                {
                    "resourceType": "Condition",
                    "id": f"cond-{pid}-{i}",
                    "subject": _ref(pid),
                    "code": _concept(system, code, display),
                    "clinicalStatus": {
                        "coding": [
                            {
                                "system": "http://terminology.hl7.org/CodeSystem/condition-clinical",
                                "code": status,
                            }
                        ]
                    },
                    "onsetDateTime": _day(base, -365 * (i + 1)),
                }
            )

    if populated(ResourceType.OBSERVATION):
        obs: list[dict] = []
        series_len = profile.lab_history_length if profile.lab_history_length > 0 else 2
        system, code, display, unit = LAB_VOCAB[0]  # HbA1c series
        value = round(rng.uniform(6.0, 9.5), 1)
        series = []
        for i in range(series_len):
            value = round(min(14.0, max(4.0, value + rng.uniform(-0.4, 0.4))), 1)
            when = _day(base, -30 * (series_len - 1 - i))
            obs.append(
                {
                    "resourceType": "Observation",
                    "id": f"obs-{pid}-a1c-{i}",
                    "subject": _ref(pid),
                    "status": "final",
                    "category": [
                        {
                            "coding": [
                                {
                                    "system": "http://terminology.hl7.org/CodeSystem/observation-category",
                                    "code": "laboratory",
                                }
                            ]
                        }
                    ],
                    "code": _concept(system, code, display),
                    "effectiveDateTime": when,
                    "valueQuantity": {"value": value, "unit": unit},
                }
            )
            series.append({"instant": when, "value": value, "unit": unit})
        manifest["lab_series"][code] = {
            "display": display,
            "length": series_len,
            "max_date": series[-1]["instant"],
            "max_value": series[-1]["value"],
            "unit": unit,
        }
        system, code, display, unit = LAB_VOCAB[1]  # single creatinine
        cre = round(rng.uniform(0.6, 1.8), 2)
        when = _day(base, -14)
        obs.append(
            {
                "resourceType": "Observation",
                "id": f"obs-{pid}-cre-0",
                "subject": _ref(pid),
                "status": "final",
                "code": _concept(system, code, display),
                "effectiveDateTime": when,
                "valueQuantity": {"value": cre, "unit": unit},
            }
        )
        manifest["lab_series"][code] = {
            "display": display,
            "length": 1,
            "max_date": when,
            "max_value": cre,
            "unit": unit,
        }
        if profile.conflicting_obs:
            system, code, display, unit = LAB_VOCAB[2]
            when = _day(base, -7)
            for j, value in enumerate((120, 152)):
                obs.append(
                    {
                        "resourceType": "Observation",
                        "id": f"obs-{pid}-bp-{j}",
                        "subject": _ref(pid),
                        "status": "final",
                        "code": _concept(system, code, display),
                        "effectiveDateTime": when,
                        "valueQuantity": {"value": value, "unit": unit},
                    }
                )
            manifest["conflicting_observations"] = {
                "code": code,
                "instant": when,
                "values": [120, 152],
            }
        resources[ResourceType.OBSERVATION] = obs

    if populated(ResourceType.MEDICATION_REQUEST):
        meds: list[dict] = []
        idx = 0
        for system, code, display, dose in MED_VOCAB:
            copies = 1
            if code == "197361" and profile.duplicate_order_count > 0:
                copies = profile.duplicate_order_count
            for _ in range(copies):
                meds.append(
                    {
                        "resourceType": "MedicationRequest",
                        "id": f"med-{pid}-{idx}",
                        "subject": _ref(pid),
                        "status": "active",
                        "intent": "order",
                        "medicationCodeableConcept": _concept(system, code, display),
                        "authoredOn": _day(base, -60),
                        "dosageInstruction": [{"text": dose}],
                    }
                )
                idx += 1
            if copies > 1:
                manifest["dedup_groups"].append(
                    {
                        "resource_type": "MedicationRequest",
                        "system": system,
                        "code": code,
                        "day": _day(base, -60)[:10],
                        "count": copies,
                    }
                )
        resources[ResourceType.MEDICATION_REQUEST] = meds

    if populated(ResourceType.ALLERGY_INTOLERANCE):
        system, code, display, crit = ALLERGY_VOCAB[0]
        resources[ResourceType.ALLERGY_INTOLERANCE].append(
            {
                "resourceType": "AllergyIntolerance",
                "id": f"alg-{pid}-0",
                "patient": _ref(pid),
                "code": _concept(system, code, display),
                "criticality": crit,
                "clinicalStatus": {
                    "coding": [
                        {
                            "system": "http://terminology.hl7.org/CodeSystem/allergyintolerance-clinical",
                            "code": "active",
                        }
                    ]
                },
                "recordedDate": _day(base, -800),
            }
        )

    if populated(ResourceType.PROCEDURE):
        for i, (system, code, display) in enumerate(PROCEDURE_VOCAB):
            resources[ResourceType.PROCEDURE].append(
                {
                    "resourceType": "Procedure",
                    "id": f"proc-{pid}-{i}",
                    "subject": _ref(pid),
                    "status": "completed",
                    "code": _concept(system, code, display),
                    "performedDateTime": _day(base, -200 * (i + 1)),
                }
            )

    if populated(ResourceType.ENCOUNTER):
        resources[ResourceType.ENCOUNTER].append(
            {
                "resourceType": "Encounter",
                "id": f"enc-{pid}-0",
                "subject": _ref(pid),
                "status": "finished",
                "class": {"system": "http://terminology.hl7.org/CodeSystem/v3-ActCode", "code": "IMP"},
                "type": [_concept(SNOMED, "32485007", "Hospital admission")],
                "period": {"start": _day(base, -90), "end": _day(base, -85)},
            }
        )

    if populated(ResourceType.FAMILY_MEMBER_HISTORY):
        resources[ResourceType.FAMILY_MEMBER_HISTORY].append(
            {
                "resourceType": "FamilyMemberHistory",
                "id": f"fmh-{pid}-0",
                "patient": _ref(pid),
                "status": "completed",
                "relationship": _concept(
                    "http://terminology.hl7.org/CodeSystem/v3-RoleCode", "MTH", "Mother"
                ),
                "date": _day(base, -1000),
            }
        )

    if populated(ResourceType.DIAGNOSTIC_REPORT):
        resources[ResourceType.DIAGNOSTIC_REPORT].append(
            {
                "resourceType": "DiagnosticReport",
                "id": f"rep-{pid}-0",
                "subject": _ref(pid),
                "status": "final",
                "code": _concept(LOINC, "58410-2", "CBC panel - Blood by Automated count"),
                "effectiveDateTime": _day(base, -14),
            }
        )

    if populated(ResourceType.IMMUNIZATION):
        system, code, display = IMMUNIZATION_VOCAB[0]
        resources[ResourceType.IMMUNIZATION].append(
            {
                "resourceType": "Immunization",
                "id": f"imm-{pid}-0",
                "patient": _ref(pid),
                "status": "completed",
                "vaccineCode": _concept(system, code, display),
                "occurrenceDateTime": _day(base, -120),
            }
        )

    if populated(ResourceType.CARE_PLAN):
        resources[ResourceType.CARE_PLAN].append(
            {
                "resourceType": "CarePlan",
                "id": f"cp-{pid}-0",
                "subject": _ref(pid),
                "status": "active",
                "title": "Diabetes management plan",
                "period": {"start": _day(base, -180)},
            }
        )

    if populated(ResourceType.IMAGING_STUDY):
        resources[ResourceType.IMAGING_STUDY].append(
            {
                "resourceType": "ImagingStudy",
                "id": f"img-{pid}-0",
                "subject": _ref(pid),
                "status": "available",
                "description": "CT abdomen without contrast",
                "started": _day(base, -45),
            }
        )

    if populated(ResourceType.GOAL):
        resources[ResourceType.GOAL].append(
            {
                "resourceType": "Goal",
                "id": f"goal-{pid}-0",
                "subject": _ref(pid),
                "lifecycleStatus": "active",
                "description": _concept(LOINC, "4548-4", "HbA1c below 7 percent"),
                "startDate": _day(base, -180)[:10],
            }
        )

    if populated(ResourceType.COMPOSITION):
        resources[ResourceType.COMPOSITION].append(
            {
                "resourceType": "Composition",
                "id": f"comp-{pid}-0",
                "subject": _ref(pid),
                "status": "final",
                "title": "Continuity of care document",
                "date": _day(base, -30),
            }
        )

    if populated(ResourceType.FLAG):
        resources[ResourceType.FLAG].append(
            {
                "resourceType": "Flag",
                "id": f"flag-{pid}-0",
                "subject": _ref(pid),
                "status": "active",
                "code": _concept(SNOMED, "129839007", "At risk for falls"),
                "period": {"start": _day(base, -60)},
            }
        )

    if populated(ResourceType.DEVICE):
        resources[ResourceType.DEVICE].append(
            {
                "resourceType": "Device",
                "id": f"dev-{pid}-0",
                "patient": _ref(pid),
                "status": "active",
                "type": _concept(SNOMED, "14106009", "Cardiac pacemaker"),
            }
        )

    if populated(ResourceType.CONSENT):
        resources[ResourceType.CONSENT].append(
            {
                "resourceType": "Consent",
                "id": f"cons-{pid}-0",
                "patient": _ref(pid),
                "status": "active",
                "scope": _concept(
                    "http://terminology.hl7.org/CodeSystem/consentscope",
                    "patient-privacy",
                    "Privacy Consent",
                ),
                "dateTime": _day(base, -400),
            }
        )

    manifest["counts"] = {rt.value: len(resources[rt]) for rt in ResourceType}
    bundle_set = SyntheticBundleSet(patient_id=pid, resources=resources, manifest=manifest)
    _verify_manifest(bundle_set)
    return bundle_set


def _verify_manifest(bundles: SyntheticBundleSet) -> None:
    """Re-derive every manifest fact from the emitted JSON; raise on drift."""
    for rt in ResourceType:
        actual = len(bundles.resources[rt])
        claimed = bundles.manifest["counts"][rt.value]
        if actual != claimed:
            raise AssertionError(f"manifest count mismatch for {rt.value}: {claimed} vs {actual}")
    for code, facts in bundles.manifest["lab_series"].items():
        points = [
            (r["effectiveDateTime"], r["valueQuantity"]["value"])
            for r in bundles.resources[ResourceType.OBSERVATION]
            if r["code"]["coding"][0]["code"] == code
        ]
        if facts["length"] != len(points):
            raise AssertionError(f"lab series length mismatch for {code}")
        max_date, max_value = max(points)
        if (max_date, max_value) != (facts["max_date"], facts["max_value"]):
            raise AssertionError(f"lab series max mismatch for {code}")
    for group in bundles.manifest["dedup_groups"]:
        members = [
            r
            for r in bundles.resources[ResourceType.MEDICATION_REQUEST]
            if r["medicationCodeableConcept"]["coding"][0]["code"] == group["code"]
            and r["authoredOn"][:10] == group["day"]
        ]
        if len(members) != group["count"]:
            raise AssertionError(f"dedup group mismatch for {group['code']}")


# --- fixture export / load -----------------------------------------------------


def export_fixtures(bundles: SyntheticBundleSet, out_dir: Path) -> Path:
    """Write {patient_id}/{Type}.json plus manifest.json. Deterministic bytes."""
    patient_dir = Path(out_dir) / bundles.patient_id
    patient_dir.mkdir(parents=True, exist_ok=True)
    for rt in ResourceType:
        items = bundles.resources[rt]
        if items:
            (patient_dir / f"{rt.value}.json").write_text(
                json.dumps(items, indent=2, sort_keys=True) + "\n"
            )
    (patient_dir / "manifest.json").write_text(
        json.dumps(bundles.manifest, indent=2, sort_keys=True) + "\n"
    )
    return patient_dir


def load_fixtures(fixtures_dir: Path) -> list[SyntheticBundleSet]:
    out = []
    for patient_dir in sorted(Path(fixtures_dir).iterdir()):
        if not patient_dir.is_dir():
            continue
        manifest_path = patient_dir / "manifest.json"
        manifest = json.loads(manifest_path.read_text()) if manifest_path.exists() else {}
        resources = {rt: [] for rt in ResourceType}
        for rt in ResourceType:
            path = patient_dir / f"{rt.value}.json"
            if path.exists():
                resources[rt] = json.loads(path.read_text())
        out.append(
            SyntheticBundleSet(
                patient_id=manifest.get("patient_id", patient_dir.name),
                resources=resources,
                manifest=manifest,
            )
        )
    return out


# --- mock retrieval source -------------------------------------------------------


class MockFhirTransport:
    """In-process test double for the FHIR REST interface.

    Serves paginated searchset Bundles (page size 2 by default, to force the
    multi-page path), direct Patient reads, configurable 400s for unsupported
    searches, 404s for absent types, and seeded transient 5xx injection.
    Thread-safe for the client's concurrent per-type fetches.
    """

    def __init__(
        self,
        bundles: list[SyntheticBundleSet],
        profile: Optional[VariabilityProfile] = None,
        page_size: int = MOCK_PAGE_SIZE,
    ):
        self.patients = {b.patient_id: b for b in bundles}
        self.profile = profile or VariabilityProfile()
        self.page_size = page_size
        self._lock = threading.Lock()
        self._flaked: set[str] = set()
        self.request_log: list[str] = []

    def _should_flake(self, url: str) -> bool:
        if self.profile.flaky_5xx_rate <= 0.0:
            return False
        with self._lock:
            if url in self._flaked:
                return False
            # Deterministic per-URL decision; the failure is transient so a
            # single retry always recovers.
            roll = random.Random(f"{self.profile.seed}:{url}").random()
            if roll < self.profile.flaky_5xx_rate:
                self._flaked.add(url)
                return True
        return False

    def get(self, url: str, headers: dict, timeout_ms: int = 0) -> TransportResponse:
        with self._lock:
            self.request_log.append(url)
        if self._should_flake(url):
            return TransportResponse(503, {"resourceType": "OperationOutcome"})
        parts = urlsplit(url)
        path = parts.path
        query = {k: v[0] for k, v in parse_qs(parts.query).items()}
        segments = [s for s in path.split("/") if s]

        # Direct read: .../Patient/{id}
        if len(segments) >= 2 and segments[-2] == "Patient" and "patient" not in query:
            pid = segments[-1]
            bundle_set = self.patients.get(pid)
            if bundle_set is None or not bundle_set.resources[ResourceType.PATIENT]:
                return TransportResponse(404, _outcome("not-found"))
            return TransportResponse(200, bundle_set.resources[ResourceType.PATIENT][0])

        type_name = segments[-1] if segments else ""
        try:
            rt = ResourceType.from_name(type_name)
        except ValueError:
            return TransportResponse(404, _outcome("unknown type"))
        if rt in self.profile.not_found_types:
            return TransportResponse(404, _outcome("not served"))
        if rt in self.profile.unsupported_searches:
            return TransportResponse(400, _outcome("search parameter not supported"))
        pid = query.get("patient", "")
        bundle_set = self.patients.get(pid)
        if bundle_set is None:
            return TransportResponse(200, _searchset([], None))
        items = bundle_set.resources[rt]
        page = int(query.get("_page", "1"))
        start = (page - 1) * self.page_size
        chunk = items[start : start + self.page_size]
        next_url = None
        if start + self.page_size < len(items):
            next_query = dict(query)
            next_query["_page"] = str(page + 1)
            next_url = f"{parts.scheme}://{parts.netloc}{path}?{urlencode(next_query)}"
        entries = [
            {"fullUrl": f"{parts.scheme}://{parts.netloc}{path}/{r['id']}", "resource": r}
            for r in chunk
        ]
        return TransportResponse(200, _searchset(entries, next_url, total=len(items)))


def _outcome(detail: str) -> dict:
    return {
        "resourceType": "OperationOutcome",
        "issue": [{"severity": "error", "diagnostics": detail}],
    }


def _searchset(entries: list[dict], next_url: Optional[str], total: int = 0) -> dict:
    bundle = {
        "resourceType": "Bundle",
        "type": "searchset",
        "total": total,
        "entry": entries,
        "link": [],
    }
    if next_url:
        bundle["link"].append({"relation": "next", "url": next_url})
    return bundle


def mock_source(
    bundles: list[SyntheticBundleSet],
    profile: Optional[VariabilityProfile] = None,
    page_size: int = MOCK_PAGE_SIZE,
) -> MockFhirTransport:
    return MockFhirTransport(bundles, profile, page_size)


def fixture_transport(fixtures_dir: Path) -> MockFhirTransport:
    """Serve previously exported fixtures through the mock interface."""
    return MockFhirTransport(load_fixtures(fixtures_dir))


# --- loopback HTTP mode ------------------------------------------------------------


class LoopbackFhirServer:
    """Serves a MockFhirTransport over real HTTP for end-to-end runs."""

    def __init__(self, transport: MockFhirTransport, host: str = "127.0.0.1", port: int = 0):
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_GET(self):
                url = f"http://{self.headers.get('Host', outer.address)}{self.path}"
                resp = outer.transport.get(url, dict(self.headers))
                body = json.dumps(resp.body if resp.body is not None else {}).encode()
                self.send_response(resp.status_code)
                self.send_header("Content-Type", "application/fhir+json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, *args):
                pass

        self.transport = transport
        self._server = ThreadingHTTPServer((host, port), Handler)
        self.address = f"{host}:{self._server.server_address[1]}"
        self.base_url = f"http://{self.address}/fhir"
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    def start(self) -> "LoopbackFhirServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self) -> "LoopbackFhirServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


# --- stub hosted backends --------------------------------------------------------------


class EchoStubBackend:
    """Schema-valid hosted backend double: echoes the deterministic rendering
    in the hosted wire format, optionally corrupted for guardrail tests."""

    def __init__(self, corruption: Optional[str] = None):
        # corruption: None | "dangling" | "value" | "recommendation"
        self.corruption = corruption

    def generate(self, request: dict) -> dict:
        from .normalizer import ClinicalContextPackage
        from .summarizer import RenderMode, StatementKind, summarize_deterministic

        ccp = ClinicalContextPackage.from_dict(request["ccp"])
        doc = summarize_deterministic(ccp, RenderMode.NOTICE_EMPTY)
        sections = []
        for key, stmts in doc.sections:
            out_stmts = []
            for s in stmts:
                out_stmts.append(
                    {
                        "text": s.text,
                        "kind": s.kind.value,
                        "evidence_ids": list(s.evidence_refs),
                        "numeric_claims": [list(c) for c in s.numeric_claims],
                    }
                )
            sections.append({"key": key.value, "statements": out_stmts})

        if self.corruption == "dangling":
            sections[0]["statements"].append(
                {
                    "text": "Prior myocardial infarction — 2018-03-01",
                    "evidence_ids": ["Condition/999-does-not-exist"],
                    "numeric_claims": [],
                }
            )
        elif self.corruption == "value":
            for sec in sections:
                for stmt in sec["statements"]:
                    if stmt["numeric_claims"]:
                        old = stmt["numeric_claims"][0][0]
                        stmt["numeric_claims"][0][0] = "9999"
                        stmt["text"] = stmt["text"].replace(old, "9999", 1)
                        return {"sections": sections}
        elif self.corruption == "recommendation":
            sections[0]["statements"].append(
                {
                    "text": "We recommend starting insulin for glycemic control",
                    "evidence_ids": [ccp.patient.evidence_id],
                    "numeric_claims": [],
                }
            )
        return {"sections": sections}
