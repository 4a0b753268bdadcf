#!/usr/bin/env python3
"""Run the HTTP service against a loopback synthetic FHIR source.

Starts an in-process FHIR endpoint seeded with one synthetic patient, then
serves the summarization API on top of it. Handy for manual poking and for
driving the web UI locally.

Usage: python3 scripts/run_demo_server.py [--port 8000] [--seed 1]
Prints the demo patient id and API keys on startup.
"""

import argparse

import uvicorn

from ehrsum import testkit
from ehrsum.config import ApiKey, ServiceConfig
from ehrsum.service import create_app


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8000)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--profile", default="baseline", choices=testkit.PROFILE_NAMES)
    args = parser.parse_args()

    profile = testkit.named_profile(args.profile, seed=args.seed)
    bundles = testkit.generate_patient(profile)
    source = testkit.mock_source([bundles], profile)

    config = ServiceConfig(
        fhir_base_url=testkit.MOCK_BASE_URL,
        api_keys=(
            ApiKey("demo-clinician-key", "demo-clinician", "clinician"),
            ApiKey("demo-admin-key", "demo-admin", "administrator"),
        ),
    )
    app = create_app(config, transport=source)
    print(f"demo patient id: {bundles.patient_id}", flush=True)
    print("clinician key:   demo-clinician-key", flush=True)
    print("admin key:       demo-admin-key", flush=True)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
