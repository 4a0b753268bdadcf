"""Command-line entry point: one-shot summarization, evaluation, fixture
generation, the stress suite, and a service runner.

Exit codes: 0 success, 1 usage or I/O error, 2 patient unavailable,
3 evaluation failed (report still printed).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import load_config
from .evaluator import Checklist, default_checklist, evaluate, run_stress_suite
from .fhir_client import EndpointConfig, PatientUnavailableError, retrieve_patient_context
from .normalizer import ClinicalContextPackage, build_context_package
from .summarizer import (
    BackendKind,
    FingerprintMismatchError,
    RenderMode,
    SummaryDocument,
    render_markdown,
    render_text,
    summarize_deterministic,
    summarize_via_backend,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ehrsum", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("summarize", help="retrieve, normalize, and summarize one patient")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--fhir-base", help="FHIR R4 endpoint base URL")
    source.add_argument("--fixtures", help="directory of exported testkit fixtures")
    p.add_argument("--patient", required=True, help="patient logical id")
    p.add_argument("--format", choices=["text", "json", "markdown"], default="text")
    p.add_argument("--mode", choices=["omit-empty", "notice-empty"], default="notice-empty")
    p.add_argument("--backend", choices=["deterministic", "hosted"], default="deterministic")
    p.add_argument("--backend-url", help="hosted backend endpoint URL")
    p.add_argument("--token", help="bearer token for the FHIR endpoint")
    p.add_argument("--out", help="output path (default stdout)")
    p.add_argument("--emit-ccp", help="also write the context package JSON here")

    p = sub.add_parser("evaluate", help="evaluate a summary against its context package")
    p.add_argument("--ccp", required=True)
    p.add_argument("--summary", required=True)
    p.add_argument("--checklist", help="checklist JSON (defaults to the built-in domains)")

    p = sub.add_parser("gen-fixtures", help="write synthetic patient fixtures")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--profile", default="baseline")
    p.add_argument("--out", required=True)

    p = sub.add_parser("stress", help="run the named complex-case suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", help="write the suite report JSON here")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--config", help="YAML or TOML config file")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return parser


def _write_output(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _cmd_summarize(args) -> int:
    from . import testkit

    if args.fixtures:
        transport = testkit.fixture_transport(Path(args.fixtures))
        endpoint = EndpointConfig(base_url=testkit.MOCK_BASE_URL, retry_backoff_s=0.0)
    else:
        transport = None
        endpoint = EndpointConfig(base_url=args.fhir_base, auth_token=args.token)
    try:
        records, report = retrieve_patient_context(endpoint, args.patient, transport)
    except PatientUnavailableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    ccp = build_context_package(records, report)
    if args.emit_ccp:
        Path(args.emit_ccp).write_text(ccp.to_json(indent=2) + "\n")
    mode = RenderMode.OMIT_EMPTY if args.mode == "omit-empty" else RenderMode.NOTICE_EMPTY
    if args.backend == "hosted":
        if not args.backend_url:
            print("error: --backend hosted requires --backend-url", file=sys.stderr)
            return 1
        doc = summarize_via_backend(ccp, BackendKind("hosted", args.backend_url), mode=mode)
    else:
        doc = summarize_deterministic(ccp, mode)
    if args.format == "json":
        _write_output(doc.to_json(indent=2) + "\n", args.out)
    elif args.format == "markdown":
        _write_output(render_markdown(doc), args.out)
    else:
        _write_output(render_text(doc), args.out)
    return 0


def _cmd_evaluate(args) -> int:
    try:
        ccp = ClinicalContextPackage.from_json(Path(args.ccp).read_text())
        doc = SummaryDocument.from_json(Path(args.summary).read_text())
        checklist = (
            Checklist.from_dict(json.loads(Path(args.checklist).read_text()))
            if args.checklist
            else default_checklist()
        )
    except (OSError, KeyError, ValueError) as exc:
        print(f"error: could not parse inputs: {exc}", file=sys.stderr)
        return 1
    if doc.ccp_fingerprint != ccp.fingerprint():
        print(
            "error: summary fingerprint does not match this context package "
            "(the files come from different runs)",
            file=sys.stderr,
        )
        return 1
    report = evaluate(ccp, doc, checklist)
    print(report.to_json())
    return 0 if report.overall_pass else 3


def _cmd_gen_fixtures(args) -> int:
    from . import testkit

    try:
        profile = testkit.named_profile(args.profile, seed=args.seed)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    bundles = testkit.generate_patient(profile)
    try:
        patient_dir = testkit.export_fixtures(bundles, Path(args.out))
    except OSError as exc:
        print(f"error: could not write fixtures: {exc}", file=sys.stderr)
        return 1
    print(f"wrote fixtures for {bundles.patient_id} to {patient_dir}")
    return 0


def _cmd_stress(args) -> int:
    report = run_stress_suite(seed=args.seed)
    print(report.render_table())
    if args.report:
        try:
            Path(args.report).write_text(report.to_json() + "\n")
        except OSError as exc:
            print(f"error: could not write report: {exc}", file=sys.stderr)
            return 1
    return 0 if report.all_passed else 3


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    config = load_config(Path(args.config) if args.config else None)
    app = create_app(config)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; the CLI contract uses 1.
        return 1 if exc.code not in (0, None) else 0
    handlers = {
        "summarize": _cmd_summarize,
        "evaluate": _cmd_evaluate,
        "gen-fixtures": _cmd_gen_fixtures,
        "stress": _cmd_stress,
        "serve": _cmd_serve,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
