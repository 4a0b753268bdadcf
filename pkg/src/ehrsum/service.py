"""Stateless-capable HTTP service around the summarization pipeline.

Operational posture: data minimization (the context package and raw payloads
are discarded after each response), configurable retention (stateless, or
summary artifact only), PHI-minimal audit logging, role-gated API keys, and
per-key token-bucket rate limiting. Failures surface as short human-readable
messages, never stack traces.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from fastapi import Depends, FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import __version__
from .config import ApiKey, ServiceConfig
from .fhir_client import (
    EndpointConfig,
    PatientUnavailableError,
    Transport,
    _iso,
    retrieve_patient_context,
)
from .normalizer import build_context_package
from .summarizer import (
    DEFAULT_DISCLAIMER,
    BackendKind,
    RenderMode,
    answer_question,
    summarize_deterministic,
    summarize_via_backend,
)

# Persisted artifact keys in summary_only mode; nothing else is ever stored.
ARTIFACT_KEYS = {"artifact_id", "patient_ref_hash", "summary", "backend", "timestamps"}

AUDIT_EVENT_KEYS = {"event_id", "at", "actor", "action", "patient_ref_hash", "outcome"}


class TokenBucketLimiter:
    """Per-key token bucket; refills continuously at per_minute/60 per second."""

    def __init__(self, per_minute: int):
        self.per_minute = per_minute
        self._lock = threading.Lock()
        self._buckets: dict[str, tuple[float, float]] = {}  # key -> (tokens, last)

    def allow(self, key: str) -> bool:
        now = time.monotonic()
        with self._lock:
            tokens, last = self._buckets.get(key, (float(self.per_minute), now))
            tokens = min(float(self.per_minute), tokens + (now - last) * self.per_minute / 60.0)
            if tokens >= 1.0:
                self._buckets[key] = (tokens - 1.0, now)
                return True
            self._buckets[key] = (tokens, now)
            return False


class AuditSink:
    """Append-only, internally synchronized. Events are PHI-minimal by
    schema: no payloads, no summary text, no plain identifiers."""

    def __init__(self, path: Optional[Path] = None):
        self.path = Path(path) if path else None
        self._lock = threading.Lock()
        self._events: list[dict] = []

    def append(self, event: dict) -> None:
        assert set(event) == AUDIT_EVENT_KEYS, f"non-minimal audit event: {sorted(event)}"
        with self._lock:
            self._events.append(event)
            if self.path:
                with self.path.open("a") as fh:
                    fh.write(json.dumps(event, sort_keys=True) + "\n")

    def events(self) -> list[dict]:
        with self._lock:
            return list(self._events)


class SummaryStore:
    """summary_only retention: one JSON file per artifact, minimal key set."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def put(self, artifact: dict) -> None:
        assert set(artifact) == ARTIFACT_KEYS
        path = self.root / f"{artifact['artifact_id']}.json"
        path.write_text(json.dumps(artifact, sort_keys=True))

    def get(self, artifact_id: str) -> Optional[dict]:
        path = self.root / f"{artifact_id}.json"
        if not path.exists() or "/" in artifact_id:
            return None
        return json.loads(path.read_text())


class SummarizeBody(BaseModel):
    patient_id: str
    backend: Optional[str] = None
    render_mode: Optional[str] = None


class AskBody(BaseModel):
    patient_id: str
    question: str


def _hash_patient_ref(patient_id: str, salt: str) -> str:
    return hashlib.sha256(f"{salt}:{patient_id}".encode()).hexdigest()


def create_app(
    config: ServiceConfig,
    transport: Optional[Transport] = None,
    hosted_adapter=None,
) -> FastAPI:
    """Build the service. A transport or hosted adapter may be injected for
    hermetic runs; otherwise real HTTP clients are used."""
    app = FastAPI(title="ehrsum", version=__version__)
    from fastapi.middleware.cors import CORSMiddleware

    # The browser client is served from a different origin than the service.
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    limiter = TokenBucketLimiter(config.rate_limit_per_minute)
    audit = AuditSink(config.audit_path)
    store = (
        SummaryStore(Path(config.retention_store_path))
        if config.retention_mode == "summary_only"
        else None
    )
    keys_by_token = {k.key: k for k in config.api_keys}
    disclaimer = config.qa_disclaimer_text or DEFAULT_DISCLAIMER
    endpoint = EndpointConfig(base_url=config.fhir_base_url, auth_token=config.fhir_token)
    app.state.audit = audit

    def error(status: int, message: str) -> JSONResponse:
        body = {"message": message}
        if status == 500:
            body["reference"] = uuid.uuid4().hex[:12]
        return JSONResponse(status_code=status, content=body)

    def audit_event(actor: str, action: str, patient_id: str, outcome: str) -> None:
        audit.append(
            {
                "event_id": uuid.uuid4().hex,
                "at": _iso(datetime.now(timezone.utc)),
                "actor": actor,
                "action": action,
                "patient_ref_hash": _hash_patient_ref(patient_id, config.audit_salt),
                "outcome": outcome,
            }
        )

    def authenticate(request: Request, action: str, patient_id: str = ""):
        """Returns (ApiKey, None) or (None, error response)."""
        header = request.headers.get("Authorization", "")
        token = header.removeprefix("Bearer ").strip() if header.startswith("Bearer ") else None
        api_key = keys_by_token.get(token) if token else None
        if api_key is None:
            audit_event("unknown", action, patient_id, "Denied")
            return None, error(401, "Missing or unknown API key")
        if action == "FetchAudit" and api_key.role != "administrator":
            audit_event(api_key.label, action, patient_id, "Denied")
            return None, error(403, "Administrator role required")
        if not limiter.allow(api_key.key):
            audit_event(api_key.label, action, patient_id, "Denied")
            return None, error(429, "Rate limit exceeded; retry later")
        return api_key, None

    def build_ccp(patient_id: str):
        records, report = retrieve_patient_context(endpoint, patient_id, transport)
        return build_context_package(records, report)

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/summarize")
    def summarize(body: SummarizeBody, request: Request):
        api_key, err = authenticate(request, "Summarize", body.patient_id)
        if err:
            return err
        mode = (
            RenderMode.OMIT_EMPTY
            if body.render_mode == "omit_empty"
            else RenderMode.NOTICE_EMPTY
        )
        backend_name = body.backend or config.backend_kind
        try:
            ccp = build_ccp(body.patient_id)
            if backend_name == "hosted":
                backend = BackendKind("hosted", config.backend_url or "http://unconfigured")
                doc = summarize_via_backend(
                    ccp, backend, adapter=hosted_adapter, mode=mode, disclaimer=disclaimer
                )
            else:
                doc = summarize_deterministic(ccp, mode, disclaimer)
        except PatientUnavailableError:
            audit_event(api_key.label, "Summarize", body.patient_id, "Error")
            return error(502, "Patient record unavailable from source")
        except Exception:
            audit_event(api_key.label, "Summarize", body.patient_id, "Error")
            return error(500, "Internal error while generating the summary")
        response = doc.to_dict()
        index = ccp.evidence_index()
        response["sources"] = {
            ref: index[ref].source_url for ref in sorted(doc.cited_ids()) if ref in index
        }
        if store is not None:
            artifact_id = uuid.uuid4().hex
            store.put(
                {
                    "artifact_id": artifact_id,
                    "patient_ref_hash": _hash_patient_ref(body.patient_id, config.audit_salt),
                    "summary": response,
                    "backend": doc.backend.kind,
                    "timestamps": {
                        "generated_at": _iso(doc.generated_at),
                        "stored_at": _iso(datetime.now(timezone.utc)),
                    },
                }
            )
            response["artifact_id"] = artifact_id
        audit_event(api_key.label, "Summarize", body.patient_id, "Ok")
        # ccp and raw records go out of scope here: nothing transient persists.
        return response

    @app.post("/ask")
    def ask(body: AskBody, request: Request):
        api_key, err = authenticate(request, "Ask", body.patient_id)
        if err:
            return err
        if not body.question.strip():
            audit_event(api_key.label, "Ask", body.patient_id, "Error")
            return error(400, "Question must be non-empty")
        try:
            # Rebuilt per request: no cached PHI between calls.
            ccp = build_ccp(body.patient_id)
            answer = answer_question(ccp, body.question)
            index = ccp.evidence_index()
            sources = [
                {"evidence_id": ref, "source_url": index[ref].source_url}
                for ref in answer.evidence_refs
                if ref in index
            ]
        except PatientUnavailableError:
            audit_event(api_key.label, "Ask", body.patient_id, "Error")
            return error(502, "Patient record unavailable from source")
        except Exception:
            audit_event(api_key.label, "Ask", body.patient_id, "Error")
            return error(500, "Internal error while answering the question")
        audit_event(api_key.label, "Ask", body.patient_id, "Ok")
        response = answer.to_dict()
        response["disclaimer"] = disclaimer
        response["sources"] = sources
        return response

    @app.get("/summary/{artifact_id}")
    def fetch_summary(artifact_id: str, request: Request):
        api_key, err = authenticate(request, "FetchSummary", "")
        if err:
            return err
        if store is None:
            audit_event(api_key.label, "FetchSummary", "", "Error")
            return error(404, "Summary retention is disabled in stateless mode")
        artifact = store.get(artifact_id)
        if artifact is None:
            audit_event(api_key.label, "FetchSummary", "", "Error")
            return error(404, "No stored summary with this id")
        audit_event(api_key.label, "FetchSummary", "", "Ok")
        return artifact

    @app.get("/audit")
    def fetch_audit(request: Request):
        api_key, err = authenticate(request, "FetchAudit", "")
        if err:
            return err
        audit_event(api_key.label, "FetchAudit", "", "Ok")
        return {"events": audit.events()}

    return app
