from datetime import datetime, timezone

import pytest

from ehrsum import testkit
from ehrsum.fhir_client import EndpointConfig, retrieve_patient_context
from ehrsum.normalizer import build_context_package
from ehrsum.summarizer import RenderMode, summarize_deterministic

FIXED_NOW = datetime(2024, 6, 1, 12, 0, 0, tzinfo=timezone.utc)


def fixed_clock():
    return FIXED_NOW


def run_pipeline(profile, mode=RenderMode.NOTICE_EMPTY, page_size=2, max_pages=500):
    """Full hermetic pipeline: generate -> mock retrieval -> CCP -> summary."""
    bundles = testkit.generate_patient(profile)
    transport = testkit.mock_source([bundles], profile, page_size=page_size)
    config = EndpointConfig(
        base_url=testkit.MOCK_BASE_URL, max_pages=max_pages, retry_backoff_s=0.0
    )
    records, report = retrieve_patient_context(
        config, bundles.patient_id, transport, fixed_clock
    )
    ccp = build_context_package(records, report, fixed_clock)
    doc = summarize_deterministic(ccp, mode, clock=fixed_clock)
    return bundles, ccp, doc


@pytest.fixture
def baseline():
    return run_pipeline(testkit.named_profile("baseline", seed=1))
