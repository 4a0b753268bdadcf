"""Generator determinism, manifest fidelity, mock source behavior."""

import json
import math

from conftest import fixed_clock
from ehrsum import testkit
from ehrsum.fhir_client import (
    EndpointConfig,
    FetchState,
    ResourceType,
    fetch_resource_type,
)

CONFIG = EndpointConfig(base_url=testkit.MOCK_BASE_URL, max_pages=500, retry_backoff_s=0.0)


def test_generation_deterministic_in_seed():
    profile = testkit.named_profile("baseline", seed=3)
    a = testkit.generate_patient(profile)
    b = testkit.generate_patient(profile)
    assert json.dumps(a.resources[ResourceType.OBSERVATION]) == json.dumps(
        b.resources[ResourceType.OBSERVATION]
    )
    assert a.manifest == b.manifest


def test_different_seeds_differ():
    a = testkit.generate_patient(testkit.named_profile("baseline", seed=1))
    b = testkit.generate_patient(testkit.named_profile("baseline", seed=2))
    assert a.manifest != b.manifest


def test_duplicate_orders_recorded_in_manifest():
    profile = testkit.named_profile("duplicate-medications", seed=1)
    bundles = testkit.generate_patient(profile)
    (group,) = bundles.manifest["dedup_groups"]
    assert group["count"] == 3
    members = [
        r
        for r in bundles.resources[ResourceType.MEDICATION_REQUEST]
        if r["medicationCodeableConcept"]["coding"][0]["code"] == group["code"]
    ]
    assert len(members) == 3


def test_manifest_lab_series_rederivable():
    profile = testkit.named_profile("longitudinal-labs", seed=2)
    bundles = testkit.generate_patient(profile)
    facts = bundles.manifest["lab_series"]["4548-4"]
    points = [
        (r["effectiveDateTime"], r["valueQuantity"]["value"])
        for r in bundles.resources[ResourceType.OBSERVATION]
        if r["code"]["coding"][0]["code"] == "4548-4"
    ]
    assert len(points) == facts["length"] == 200
    assert max(points) == (facts["max_date"], facts["max_value"])


def test_mock_source_paginates_at_page_size_2():
    profile = testkit.VariabilityProfile(seed=1, lab_history_length=9)
    bundles = testkit.generate_patient(profile)
    source = testkit.mock_source([bundles], profile)
    # 9 a1c + 1 creatinine = 10 observations -> 5 pages
    records, status = fetch_resource_type(
        CONFIG, bundles.patient_id, ResourceType.OBSERVATION, source, fixed_clock
    )
    assert status.pages_fetched == math.ceil(10 / 2)
    assert status.record_count == 10


def test_mock_source_unsupported_search_returns_400():
    profile = testkit.VariabilityProfile(
        seed=1, unsupported_searches=frozenset({ResourceType.DEVICE})
    )
    bundles = testkit.generate_patient(profile)
    source = testkit.mock_source([bundles], profile)
    resp = source.get(f"{testkit.MOCK_BASE_URL}/Device?patient={bundles.patient_id}", {})
    assert resp.status_code == 400


def test_zero_flake_rate_injects_no_errors():
    profile = testkit.VariabilityProfile(seed=1, flaky_5xx_rate=0.0)
    bundles = testkit.generate_patient(profile)
    source = testkit.mock_source([bundles], profile)
    for _ in range(20):
        resp = source.get(f"{testkit.MOCK_BASE_URL}/Condition?patient={bundles.patient_id}", {})
        assert resp.status_code == 200


def test_fixture_export_layout_and_round_trip(tmp_path):
    profile = testkit.named_profile("baseline", seed=5)
    bundles = testkit.generate_patient(profile)
    patient_dir = testkit.export_fixtures(bundles, tmp_path)
    assert (patient_dir / "Patient.json").exists()
    assert (patient_dir / "manifest.json").exists()
    (loaded,) = testkit.load_fixtures(tmp_path)
    assert loaded.patient_id == bundles.patient_id
    assert loaded.manifest == bundles.manifest
    assert loaded.resources[ResourceType.CONDITION] == bundles.resources[ResourceType.CONDITION]


def test_fixture_export_byte_identical(tmp_path):
    profile = testkit.named_profile("baseline", seed=5)
    d1, d2 = tmp_path / "a", tmp_path / "b"
    testkit.export_fixtures(testkit.generate_patient(profile), d1)
    testkit.export_fixtures(testkit.generate_patient(profile), d2)
    for f1 in sorted((d1 / "pt-5").iterdir()):
        f2 = d2 / "pt-5" / f1.name
        assert f1.read_bytes() == f2.read_bytes()


def test_loopback_http_server_speaks_the_client_interface():
    from ehrsum.fhir_client import HttpTransport, retrieve_patient_context

    profile = testkit.named_profile("baseline", seed=6)
    bundles = testkit.generate_patient(profile)
    source = testkit.mock_source([bundles], profile)
    with testkit.LoopbackFhirServer(source) as server:
        config = EndpointConfig(base_url=server.base_url, max_pages=500, retry_backoff_s=0.0)
        records, report = retrieve_patient_context(
            config, bundles.patient_id, HttpTransport(), fixed_clock
        )
    assert report.status_for(ResourceType.PATIENT).state is FetchState.OK
    assert len(records) == sum(bundles.manifest["counts"].values())
