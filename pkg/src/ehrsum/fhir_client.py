"""FHIR R4 retrieval layer.

Fetches a targeted set of high-yield resources for one patient over the FHIR
REST interface. Per-resource-type failures are isolated: a type that the
server does not expose, or that errors out, is recorded in the retrieval
report instead of aborting the pipeline. Only a failed Patient read aborts,
because the patient record anchors the summary.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Callable, Optional, Protocol
from urllib.parse import quote

logger = logging.getLogger(__name__)

SEARCH_PAGE_SIZE = 100


class ResourceType(Enum):
    """The closed set of resource types the retrieval layer queries."""

    PATIENT = "Patient"
    CONSENT = "Consent"
    CONDITION = "Condition"
    OBSERVATION = "Observation"
    MEDICATION_REQUEST = "MedicationRequest"
    PROCEDURE = "Procedure"
    ENCOUNTER = "Encounter"
    FAMILY_MEMBER_HISTORY = "FamilyMemberHistory"
    DIAGNOSTIC_REPORT = "DiagnosticReport"
    IMMUNIZATION = "Immunization"
    ALLERGY_INTOLERANCE = "AllergyIntolerance"
    CARE_PLAN = "CarePlan"
    IMAGING_STUDY = "ImagingStudy"
    GOAL = "Goal"
    COMPOSITION = "Composition"
    FLAG = "Flag"
    DEVICE = "Device"

    @classmethod
    def from_name(cls, name: str) -> "ResourceType":
        for rt in cls:
            if rt.value == name:
                return rt
        raise ValueError(f"unknown FHIR resource type: {name!r}")


class FetchState(Enum):
    OK = "Ok"
    ABSENT = "Absent"
    UNSUPPORTED = "Unsupported"
    ERROR = "Error"


@dataclass(frozen=True)
class EndpointConfig:
    """Connection settings for one FHIR endpoint. Immutable and shareable."""

    base_url: str
    auth_token: Optional[str] = None
    timeout_ms: int = 10_000
    max_pages: int = 50
    parallelism: int = 4
    retry_backoff_s: float = 0.25

    def __post_init__(self):
        if not self.base_url or "://" not in self.base_url:
            raise ValueError(f"base_url must be a URL, got {self.base_url!r}")
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")
        if self.max_pages < 1:
            raise ValueError("max_pages must be >= 1")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")

    def headers(self) -> dict[str, str]:
        h = {"Accept": "application/fhir+json"}
        if self.auth_token:
            h["Authorization"] = f"Bearer {self.auth_token}"
        return h


@dataclass(frozen=True)
class RawResourceRecord:
    resource_type: ResourceType
    source_id: str
    payload: dict
    source_url: str
    retrieved_at: datetime


@dataclass(frozen=True)
class ResourceTypeStatus:
    resource_type: ResourceType
    state: FetchState
    record_count: int = 0
    pages_fetched: int = 0
    detail: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "resource_type": self.resource_type.value,
            "state": self.state.value,
            "record_count": self.record_count,
            "pages_fetched": self.pages_fetched,
            "detail": self.detail,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ResourceTypeStatus":
        return cls(
            resource_type=ResourceType.from_name(d["resource_type"]),
            state=FetchState(d["state"]),
            record_count=d["record_count"],
            pages_fetched=d["pages_fetched"],
            detail=d.get("detail"),
        )


@dataclass(frozen=True)
class RetrievalReport:
    patient_id: str
    statuses: tuple[ResourceTypeStatus, ...]
    started_at: datetime
    finished_at: datetime

    def status_for(self, rt: ResourceType) -> ResourceTypeStatus:
        for s in self.statuses:
            if s.resource_type is rt:
                return s
        raise KeyError(rt)

    def to_dict(self) -> dict:
        return {
            "patient_id": self.patient_id,
            "statuses": [s.to_dict() for s in self.statuses],
            "started_at": _iso(self.started_at),
            "finished_at": _iso(self.finished_at),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RetrievalReport":
        return cls(
            patient_id=d["patient_id"],
            statuses=tuple(ResourceTypeStatus.from_dict(s) for s in d["statuses"]),
            started_at=_parse_iso(d["started_at"]),
            finished_at=_parse_iso(d["finished_at"]),
        )


class PatientUnavailableError(Exception):
    """The Patient read failed; nothing anchors a summary."""

    def __init__(self, message: str, report: RetrievalReport):
        super().__init__(message)
        self.report = report


class TransportTimeout(Exception):
    pass


@dataclass(frozen=True)
class TransportResponse:
    status_code: int
    body: Any  # parsed JSON, or None when the body is not JSON


class Transport(Protocol):
    """Minimal GET interface; the HTTP client and the in-process test double
    both implement it."""

    def get(self, url: str, headers: dict[str, str], timeout_ms: int) -> TransportResponse: ...


class HttpTransport:
    """Real network transport backed by requests."""

    def __init__(self):
        import requests

        self._session = requests.Session()

    def get(self, url: str, headers: dict[str, str], timeout_ms: int) -> TransportResponse:
        import requests

        try:
            resp = self._session.get(url, headers=headers, timeout=timeout_ms / 1000.0)
        except requests.Timeout as exc:
            raise TransportTimeout(str(exc)) from exc
        except requests.RequestException as exc:
            # Connection refused / DNS failures behave like a server error.
            raise TransportTimeout(str(exc)) from exc
        try:
            body = resp.json()
        except ValueError:
            body = None
        return TransportResponse(status_code=resp.status_code, body=body)


def _iso(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def _parse_iso(s: str) -> datetime:
    return datetime.fromisoformat(s.replace("Z", "+00:00"))


def _utcnow() -> datetime:
    return datetime.now(timezone.utc)


def _get_with_retry(
    transport: Transport, config: EndpointConfig, url: str
) -> TransportResponse:
    """One transparent retry with backoff for 5xx and timeouts."""
    attempt = 0
    while True:
        try:
            resp = transport.get(url, config.headers(), config.timeout_ms)
        except TransportTimeout:
            if attempt == 0:
                attempt += 1
                time.sleep(config.retry_backoff_s)
                continue
            raise
        if resp.status_code >= 500 and attempt == 0:
            attempt += 1
            time.sleep(config.retry_backoff_s)
            continue
        return resp


def _records_from_bundle(
    bundle: dict, rt: ResourceType, page_url: str, clock: Callable[[], datetime]
) -> tuple[list[RawResourceRecord], list[str]]:
    records: list[RawResourceRecord] = []
    warnings: list[str] = []
    for entry in bundle.get("entry", []) or []:
        resource = entry.get("resource")
        if not isinstance(resource, dict):
            continue
        if resource.get("resourceType") != rt.value:
            # Servers may interleave OperationOutcome entries; skip them.
            continue
        rid = resource.get("id")
        if not rid:
            warnings.append(f"{rt.value} entry without id skipped")
            continue
        records.append(
            RawResourceRecord(
                resource_type=rt,
                source_id=str(rid),
                payload=resource,
                source_url=entry.get("fullUrl") or f"{page_url.split('?')[0]}/{rid}",
                retrieved_at=clock(),
            )
        )
    return records, warnings


def _next_link(bundle: dict) -> Optional[str]:
    for link in bundle.get("link", []) or []:
        if link.get("relation") == "next" and link.get("url"):
            return link["url"]
    return None


def fetch_resource_type(
    config: EndpointConfig,
    patient_id: str,
    rt: ResourceType,
    transport: Optional[Transport] = None,
    clock: Callable[[], datetime] = _utcnow,
) -> tuple[list[RawResourceRecord], ResourceTypeStatus]:
    """Fetch all instances of one resource type for a patient.

    Never raises for HTTP-level failures; the outcome is encoded in the
    returned status. Patient is a direct read, everything else a
    patient-scoped search with pagination via Bundle next links.
    """
    if not patient_id:
        raise ValueError("patient_id must be non-empty")
    transport = transport or HttpTransport()
    base = config.base_url.rstrip("/")

    if rt is ResourceType.PATIENT:
        url = f"{base}/Patient/{quote(patient_id)}"
        try:
            resp = _get_with_retry(transport, config, url)
        except TransportTimeout as exc:
            return [], ResourceTypeStatus(rt, FetchState.ERROR, detail=f"timeout: {exc}")
        if resp.status_code == 200 and isinstance(resp.body, dict):
            record = RawResourceRecord(
                resource_type=rt,
                source_id=str(resp.body.get("id", patient_id)),
                payload=resp.body,
                source_url=url,
                retrieved_at=clock(),
            )
            return [record], ResourceTypeStatus(rt, FetchState.OK, 1, 1)
        if resp.status_code == 404:
            return [], ResourceTypeStatus(rt, FetchState.ABSENT, detail="patient not found")
        if 400 <= resp.status_code < 500:
            return [], ResourceTypeStatus(
                rt, FetchState.UNSUPPORTED, detail=f"HTTP {resp.status_code} on patient read"
            )
        return [], ResourceTypeStatus(rt, FetchState.ERROR, detail=f"HTTP {resp.status_code}")

    url = f"{base}/{rt.value}?patient={quote(patient_id)}&_count={SEARCH_PAGE_SIZE}"
    records: list[RawResourceRecord] = []
    pages = 0
    while url is not None and pages < config.max_pages:
        try:
            resp = _get_with_retry(transport, config, url)
        except TransportTimeout as exc:
            return records, ResourceTypeStatus(
                rt, FetchState.ERROR, len(records), pages, f"timeout: {exc}"
            )
        if resp.status_code == 404:
            return records, ResourceTypeStatus(
                rt, FetchState.ABSENT, 0, pages, "resource type not served"
            )
        if 400 <= resp.status_code < 500:
            return records, ResourceTypeStatus(
                rt,
                FetchState.UNSUPPORTED,
                len(records),
                pages,
                f"HTTP {resp.status_code} on patient-scoped search",
            )
        if resp.status_code >= 500 or not isinstance(resp.body, dict):
            return records, ResourceTypeStatus(
                rt, FetchState.ERROR, len(records), pages, f"HTTP {resp.status_code}"
            )
        pages += 1
        page_records, _ = _records_from_bundle(resp.body, rt, url, clock)
        records.extend(page_records)
        url = _next_link(resp.body)
    detail = None
    if url is not None:
        detail = f"truncated at max_pages={config.max_pages}"
    return records, ResourceTypeStatus(rt, FetchState.OK, len(records), pages, detail)


def retrieve_patient_context(
    config: EndpointConfig,
    patient_id: str,
    transport: Optional[Transport] = None,
    clock: Callable[[], datetime] = _utcnow,
) -> tuple[list[RawResourceRecord], RetrievalReport]:
    """Fetch all 17 targeted resource types for one patient.

    Patient is fetched first because it anchors the summary; its failure is
    the only abort condition (PatientUnavailableError). Remaining types are
    fetched with up to ``config.parallelism`` concurrent requests and merged
    in canonical ResourceType order.
    """
    if not patient_id:
        raise ValueError("patient_id must be non-empty")
    transport = transport or HttpTransport()
    started = clock()

    patient_records, patient_status = fetch_resource_type(
        config, patient_id, ResourceType.PATIENT, transport, clock
    )
    if patient_status.state is not FetchState.OK:
        statuses = [patient_status] + [
            ResourceTypeStatus(rt, FetchState.ERROR, detail="not attempted: patient read failed")
            for rt in ResourceType
            if rt is not ResourceType.PATIENT
        ]
        report = RetrievalReport(patient_id, tuple(statuses), started, clock())
        raise PatientUnavailableError(
            f"Patient record unavailable from source ({patient_status.detail})", report
        )

    others = [rt for rt in ResourceType if rt is not ResourceType.PATIENT]
    results: dict[ResourceType, tuple[list[RawResourceRecord], ResourceTypeStatus]] = {}
    with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
        futures = {
            rt: pool.submit(fetch_resource_type, config, patient_id, rt, transport, clock)
            for rt in others
        }
        for rt, fut in futures.items():
            results[rt] = fut.result()

    all_records = list(patient_records)
    statuses = [patient_status]
    for rt in others:
        recs, status = results[rt]
        all_records.extend(recs)
        statuses.append(status)
    report = RetrievalReport(patient_id, tuple(statuses), started, clock())
    return all_records, report
