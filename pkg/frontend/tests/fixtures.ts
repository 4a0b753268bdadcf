import type { AskResponse, SummaryDocument } from "../src/types.js";
import { SECTION_ORDER } from "../src/types.js";

export function sampleSummary(overrides: Partial<SummaryDocument> = {}): SummaryDocument {
  const sections = SECTION_ORDER.map((key) => {
    if (key === "Conditions") {
      return {
        key,
        statements: [
          {
            text: "Type 2 diabetes mellitus, active — 2022-01-10",
            section: key,
            kind: "Fact" as const,
            evidence_refs: ["Condition/c1"],
            numeric_claims: [] as [string, string, string][],
          },
        ],
      };
    }
    if (key === "Immunizations") {
      return {
        key,
        statements: [
          {
            text: "Immunizations unavailable from source",
            section: key,
            kind: "MissingData" as const,
            evidence_refs: [],
            numeric_claims: [] as [string, string, string][],
          },
        ],
      };
    }
    return {
      key,
      statements: [
        {
          text: `No ${key.toLowerCase()} available`,
          section: key,
          kind: "MissingData" as const,
          evidence_refs: [],
          numeric_claims: [] as [string, string, string][],
        },
      ],
    };
  });
  return {
    patient_header: "Patient: Doe, Alex (female, born 1990-01-01)",
    sections,
    disclaimer: "Generated from structured record data; not medical advice.",
    ccp_fingerprint: "abc123",
    backend: { kind: "deterministic" },
    generated_at: "2024-06-01T12:00:00Z",
    fallback_violations: [],
    sources: { "Condition/c1": "http://fhir.example/Condition/c1" },
    ...overrides,
  };
}

export function sampleAnswer(overrides: Partial<AskResponse> = {}): AskResponse {
  return {
    text: "Type 2 diabetes mellitus, active — 2022-01-10",
    evidence_refs: ["Condition/c1"],
    refused: false,
    refusal_reason: null,
    disclaimer: "not medical advice",
    sources: [{ evidence_id: "Condition/c1", source_url: "http://fhir.example/Condition/c1" }],
    ...overrides,
  };
}

export function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}
