#!/usr/bin/env python3
"""End-to-end walkthrough on synthetic data: generate a patient, retrieve it
through the paginated mock source, build the context package, summarize,
answer a question, and evaluate — printing each stage's result.

Usage: python3 scripts/demo_pipeline.py [--seed N] [--profile NAME]
"""

import argparse

from ehrsum import testkit
from ehrsum.evaluator import evaluate
from ehrsum.fhir_client import EndpointConfig, retrieve_patient_context
from ehrsum.normalizer import build_context_package
from ehrsum.summarizer import RenderMode, answer_question, render_text, summarize_deterministic


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--profile", default="baseline", choices=testkit.PROFILE_NAMES)
    args = parser.parse_args()

    profile = testkit.named_profile(args.profile, seed=args.seed)
    bundles = testkit.generate_patient(profile)
    transport = testkit.mock_source([bundles], profile)
    config = EndpointConfig(base_url=testkit.MOCK_BASE_URL, max_pages=500, retry_backoff_s=0.0)

    records, report = retrieve_patient_context(config, bundles.patient_id, transport)
    print(f"retrieved {len(records)} records for {bundles.patient_id}")
    for status in report.statuses:
        print(f"  {status.resource_type.value:22s} {status.state.value:12s} n={status.record_count}")

    ccp = build_context_package(records, report)
    print(f"\ncontext package fingerprint: {ccp.fingerprint()[:16]}…  trends: {len(ccp.trends)}")

    doc = summarize_deterministic(ccp, RenderMode.OMIT_EMPTY)
    print("\n" + render_text(doc))

    question = "What is the most recent HbA1c?"
    answer = answer_question(ccp, question)
    print(f"Q: {question}\nA: {answer.text}  [{', '.join(answer.evidence_refs)}]")

    result = evaluate(ccp, doc)
    print(f"\nevaluation: overall_pass={result.overall_pass} errors={len(result.errors)}")
    return 0 if result.overall_pass else 1


if __name__ == "__main__":
    raise SystemExit(main())
