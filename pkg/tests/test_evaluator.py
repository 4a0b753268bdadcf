"""Evaluation harness: coverage, omission risk, error taxonomy, stress suite."""

import random

import pytest

from conftest import fixed_clock, run_pipeline
from ehrsum import testkit
from ehrsum.evaluator import (
    ErrorCategory,
    categorize_errors,
    coverage_score,
    default_checklist,
    evaluate,
    omission_risk,
    run_stress_suite,
)
from ehrsum.mutations import MUTATION_KINDS, MutationNotApplicable, apply_mutation
from ehrsum.summarizer import SummaryDocument

EXPECTED_CATEGORY = {
    "value_change": ErrorCategory.INCORRECT_VALUE,
    "temporal_swap": ErrorCategory.INCORRECT_TEMPORAL_CONTEXT,
    "safety_deletion": ErrorCategory.OMISSION,
    "dangling_citation": ErrorCategory.HALLUCINATION_INFERENCE,
}


class TestCoverage:
    def test_deterministic_summary_covers_every_applicable_domain(self, baseline):
        _, ccp, doc = baseline
        scores = coverage_score(ccp, doc)
        applicable = {k: v for k, v in scores.items() if v is not None}
        assert applicable
        assert all(v == 1.0 for v in applicable.values())

    def test_deleting_medication_section_zeroes_current_meds(self, baseline):
        _, ccp, doc = baseline
        d = doc.to_dict()
        d["sections"] = [s for s in d["sections"] if s["key"] != "Medications"]
        mutated = SummaryDocument.from_dict(d)
        scores = coverage_score(ccp, mutated)
        assert scores["current-medications"] == 0.0
        assert scores["anticoagulants"] == 0.0

    def test_empty_chart_domains_not_applicable(self):
        profile = testkit.named_profile("sparse", seed=1)
        _, ccp, doc = run_pipeline(profile)
        scores = coverage_score(ccp, doc)
        assert scores["current-medications"] is None
        assert scores["allergies"] is None

    def test_coverage_monotone_under_statement_deletion(self, baseline):
        _, ccp, doc = baseline
        before = coverage_score(ccp, doc)
        d = doc.to_dict()
        for sec in d["sections"]:
            if sec["statements"]:
                sec["statements"] = sec["statements"][1:]
                break
        after = coverage_score(ccp, SummaryDocument.from_dict(d))
        for label, b in before.items():
            if b is not None:
                assert after[label] <= b


class TestOmissionRisk:
    def test_intact_summary_has_zero_findings(self, baseline):
        _, ccp, doc = baseline
        assert omission_risk(ccp, doc) == []

    def test_deleted_allergy_statement_found(self, baseline):
        _, ccp, doc = baseline
        mutated, _ = apply_mutation(doc, ccp, "safety_deletion", random.Random(0))
        findings = omission_risk(ccp, mutated)
        assert len(findings) == 1
        domain, evidence_id = findings[0]
        assert domain == "allergies"
        assert evidence_id.startswith("AllergyIntolerance/")

    def test_no_allergies_is_vacuously_clean(self):
        profile = testkit.named_profile("sparse", seed=1)
        _, ccp, doc = run_pipeline(profile)
        assert omission_risk(ccp, doc) == []


class TestCategorizeErrors:
    def test_clean_document_has_zero_errors(self, baseline):
        _, ccp, doc = baseline
        assert categorize_errors(ccp, doc) == []

    @pytest.mark.parametrize("kind", MUTATION_KINDS)
    def test_each_seeded_mutation_detected_exactly_once(self, baseline, kind):
        _, ccp, doc = baseline
        mutated, _ = apply_mutation(doc, ccp, kind, random.Random(1))
        errors = categorize_errors(ccp, mutated)
        assert len(errors) == 1, f"{kind}: {errors}"
        assert errors[0][0] is EXPECTED_CATEGORY[kind]


class TestEvaluate:
    def test_overall_pass_on_clean_pair(self, baseline):
        _, ccp, doc = baseline
        report = evaluate(ccp, doc)
        assert report.overall_pass
        assert report.errors == ()
        assert report.omission_findings == ()

    def test_overall_fail_on_safety_omission(self, baseline):
        _, ccp, doc = baseline
        mutated, _ = apply_mutation(doc, ccp, "safety_deletion", random.Random(2))
        report = evaluate(ccp, mutated)
        assert not report.overall_pass

    def test_overall_fail_on_hallucination(self, baseline):
        _, ccp, doc = baseline
        mutated, _ = apply_mutation(doc, ccp, "dangling_citation", random.Random(2))
        report = evaluate(ccp, mutated)
        assert not report.overall_pass

    def test_value_error_alone_does_not_fail_overall(self, baseline):
        # overall_pass keys on safety omissions and hallucinations only
        _, ccp, doc = baseline
        mutated, _ = apply_mutation(doc, ccp, "value_change", random.Random(2))
        report = evaluate(ccp, mutated)
        assert report.overall_pass
        assert any(e[0] == "IncorrectValue" for e in report.errors)

    def test_checklist_round_trips_through_json(self):
        import json

        from ehrsum.evaluator import Checklist

        checklist = default_checklist()
        again = Checklist.from_dict(json.loads(json.dumps(checklist.to_dict())))
        assert again == checklist


class TestStressSuite:
    def test_all_four_named_cases_pass(self):
        report = run_stress_suite(seed=0, clock=fixed_clock)
        assert [c.name for c in report.cases] == [
            "missing-resources",
            "conflicting-observations",
            "duplicate-medications",
            "longitudinal-labs",
        ]
        assert report.all_passed, report.render_table()

    def test_report_renders_table_and_json(self):
        report = run_stress_suite(seed=1, clock=fixed_clock)
        table = report.render_table()
        assert table.count("PASS") == 4
        assert '"all_passed": true' in report.to_json()
