"""Retrieval layer: pagination, failure classification, isolation, retry."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import fixed_clock
from ehrsum import testkit
from ehrsum.fhir_client import (
    EndpointConfig,
    FetchState,
    PatientUnavailableError,
    ResourceType,
    TransportResponse,
    fetch_resource_type,
    retrieve_patient_context,
)

CONFIG = EndpointConfig(base_url=testkit.MOCK_BASE_URL, retry_backoff_s=0.0)


def make_source(profile=None, seed=1, page_size=2):
    profile = profile or testkit.named_profile("baseline", seed)
    bundles = testkit.generate_patient(profile)
    return bundles, testkit.mock_source([bundles], profile, page_size=page_size)


def test_multi_page_search_collects_all_records():
    # 3 conditions at page size 2 -> 2 pages
    bundles, source = make_source(seed=1)
    n = bundles.manifest["counts"]["Condition"]
    records, status = fetch_resource_type(
        CONFIG, bundles.patient_id, ResourceType.CONDITION, source, fixed_clock
    )
    assert status.state is FetchState.OK
    assert len(records) == n == status.record_count
    assert status.pages_fetched == math.ceil(n / 2)


def test_empty_searchset_is_ok_with_zero_records():
    profile = testkit.named_profile("sparse", seed=1)
    bundles, source = make_source(profile)
    records, status = fetch_resource_type(
        CONFIG, bundles.patient_id, ResourceType.IMMUNIZATION, source, fixed_clock
    )
    assert records == []
    assert status.state is FetchState.OK
    assert status.record_count == 0


def test_http_400_on_search_is_unsupported():
    profile = testkit.VariabilityProfile(
        seed=1, unsupported_searches=frozenset({ResourceType.DEVICE})
    )
    bundles, source = make_source(profile)
    records, status = fetch_resource_type(
        CONFIG, bundles.patient_id, ResourceType.DEVICE, source, fixed_clock
    )
    assert status.state is FetchState.UNSUPPORTED
    assert records == []


def test_http_404_on_type_is_absent():
    profile = testkit.VariabilityProfile(
        seed=1, not_found_types=frozenset({ResourceType.FLAG})
    )
    bundles, source = make_source(profile)
    _, status = fetch_resource_type(
        CONFIG, bundles.patient_id, ResourceType.FLAG, source, fixed_clock
    )
    assert status.state is FetchState.ABSENT
    assert status.record_count == 0


def test_patient_is_a_direct_read():
    bundles, source = make_source()
    records, status = fetch_resource_type(
        CONFIG, bundles.patient_id, ResourceType.PATIENT, source, fixed_clock
    )
    assert status.state is FetchState.OK
    assert len(records) == 1
    assert records[0].payload["resourceType"] == "Patient"
    assert all("?" not in url for url in source.request_log if "/Patient/" in url)


def test_report_covers_all_17_types_exactly_once():
    bundles, source = make_source()
    _, report = retrieve_patient_context(CONFIG, bundles.patient_id, source, fixed_clock)
    assert len(report.statuses) == 17
    assert {s.resource_type for s in report.statuses} == set(ResourceType)
    assert report.finished_at >= report.started_at


def test_failed_patient_read_aborts_with_report():
    bundles, source = make_source()
    with pytest.raises(PatientUnavailableError) as exc:
        retrieve_patient_context(CONFIG, "no-such-patient", source, fixed_clock)
    assert len(exc.value.report.statuses) == 17


def test_transient_5xx_recovers_via_retry():
    profile = testkit.VariabilityProfile(seed=5, flaky_5xx_rate=0.5)
    bundles, source = make_source(profile)
    records, report = retrieve_patient_context(CONFIG, bundles.patient_id, source, fixed_clock)
    assert all(
        report.status_for(rt).state is FetchState.OK
        for rt in ResourceType
        if bundles.manifest["counts"][rt.value] > 0
    )


def test_pagination_truncates_at_max_pages():
    profile = testkit.VariabilityProfile(seed=1, lab_history_length=20)
    bundles, source = make_source(profile)
    config = EndpointConfig(base_url=testkit.MOCK_BASE_URL, max_pages=3, retry_backoff_s=0.0)
    records, status = fetch_resource_type(
        config, bundles.patient_id, ResourceType.OBSERVATION, source, fixed_clock
    )
    assert status.pages_fetched == 3
    assert len(records) == 6
    assert "truncated" in (status.detail or "")


@settings(max_examples=20, deadline=None)
@given(
    failing=st.sets(
        st.sampled_from([rt for rt in ResourceType if rt is not ResourceType.PATIENT]),
        max_size=6,
    )
)
def test_failure_isolation(failing):
    """Types configured to fail never prevent retrieval of the others."""
    profile = testkit.VariabilityProfile(seed=2, unsupported_searches=frozenset(failing))
    bundles, source = make_source(profile)
    records, report = retrieve_patient_context(CONFIG, bundles.patient_id, source, fixed_clock)
    for rt in ResourceType:
        status = report.status_for(rt)
        if rt in failing:
            assert status.state is FetchState.UNSUPPORTED
        else:
            assert status.state is FetchState.OK
            assert status.record_count == bundles.manifest["counts"][rt.value]


class FailEverythingTransport:
    def get(self, url, headers, timeout_ms=0):
        return TransportResponse(500, None)


def test_server_errors_classified_error_not_raised():
    _, status = fetch_resource_type(
        CONFIG, "p1", ResourceType.CONDITION, FailEverythingTransport(), fixed_clock
    )
    assert status.state is FetchState.ERROR


def test_raw_payloads_never_touch_disk(tmp_path, monkeypatch):
    # Data minimization: retrieval holds everything in memory.
    monkeypatch.chdir(tmp_path)
    bundles, source = make_source()
    retrieve_patient_context(CONFIG, bundles.patient_id, source, fixed_clock)
    assert list(tmp_path.iterdir()) == []
