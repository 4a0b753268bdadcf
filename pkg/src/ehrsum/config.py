"""Configuration for the service and CLI: a YAML or TOML file with nested
sections, overridable by EHRSUM_* environment variables."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

ENV_PREFIX = "EHRSUM_"

# dotted config key -> environment variable suffix
_ENV_KEYS = {
    "fhir.base_url": "FHIR_BASE_URL",
    "fhir.token": "FHIR_TOKEN",
    "retention.mode": "RETENTION_MODE",
    "retention.store_path": "RETENTION_STORE_PATH",
    "rate_limit.per_minute": "RATE_LIMIT_PER_MINUTE",
    "audit.path": "AUDIT_PATH",
    "audit.salt": "AUDIT_SALT",
    "backend.kind": "BACKEND_KIND",
    "backend.url": "BACKEND_URL",
    "qa.disclaimer_text": "QA_DISCLAIMER_TEXT",
}


@dataclass(frozen=True)
class ApiKey:
    key: str
    label: str
    role: str  # "clinician" | "administrator"

    def __post_init__(self):
        if self.role not in ("clinician", "administrator"):
            raise ValueError(f"unknown role {self.role!r}")


@dataclass(frozen=True)
class ServiceConfig:
    fhir_base_url: str = "http://localhost:8080/fhir"
    fhir_token: Optional[str] = None
    retention_mode: str = "stateless"  # "stateless" | "summary_only"
    retention_store_path: Optional[str] = None
    rate_limit_per_minute: int = 100
    audit_path: Optional[str] = None
    audit_salt: str = "ehrsum-local-salt"
    backend_kind: str = "deterministic"
    backend_url: Optional[str] = None
    qa_disclaimer_text: Optional[str] = None
    api_keys: tuple[ApiKey, ...] = ()

    def __post_init__(self):
        if self.retention_mode not in ("stateless", "summary_only"):
            raise ValueError(f"unknown retention mode {self.retention_mode!r}")
        if self.retention_mode == "summary_only" and not self.retention_store_path:
            raise ValueError("retention.store_path is required in summary_only mode")


def _read_file(path: Path) -> dict:
    text = Path(path).read_text()
    if str(path).endswith((".toml",)):
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib

        return tomllib.loads(text)
    import yaml

    return yaml.safe_load(text) or {}


def _get(data: dict, dotted: str):
    cur = data
    for part in dotted.split("."):
        if not isinstance(cur, dict) or part not in cur:
            return None
        cur = cur[part]
    return cur


def load_config(path: Optional[Path] = None, env: Optional[dict] = None) -> ServiceConfig:
    """File values first, then EHRSUM_* environment overrides."""
    env = os.environ if env is None else env
    data = _read_file(path) if path else {}

    values: dict = {}
    for dotted, suffix in _ENV_KEYS.items():
        value = env.get(ENV_PREFIX + suffix)
        if value is None:
            value = _get(data, dotted)
        if value is not None:
            values[dotted] = value

    keys = []
    for entry in _get(data, "auth.keys") or []:
        keys.append(ApiKey(key=entry["key"], label=entry["label"], role=entry["role"]))

    defaults = ServiceConfig()
    return ServiceConfig(
        fhir_base_url=str(values.get("fhir.base_url", defaults.fhir_base_url)),
        fhir_token=values.get("fhir.token"),
        retention_mode=str(values.get("retention.mode", defaults.retention_mode)),
        retention_store_path=values.get("retention.store_path"),
        rate_limit_per_minute=int(
            values.get("rate_limit.per_minute", defaults.rate_limit_per_minute)
        ),
        audit_path=values.get("audit.path"),
        audit_salt=str(values.get("audit.salt", defaults.audit_salt)),
        backend_kind=str(values.get("backend.kind", defaults.backend_kind)),
        backend_url=values.get("backend.url"),
        qa_disclaimer_text=values.get("qa.disclaimer_text"),
        api_keys=tuple(keys),
    )
