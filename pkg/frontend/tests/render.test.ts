import { describe, expect, it } from "vitest";

import {
  renderDisclaimer,
  renderSectionCard,
  renderSummary,
  renderTranscriptEntry,
} from "../src/render.js";
import { SECTION_ORDER, sectionState } from "../src/types.js";
import { sampleAnswer, sampleSummary } from "./fixtures.js";

describe("sectionState", () => {
  it("classifies populated, empty, and unavailable sections", () => {
    const summary = sampleSummary();
    const byKey = new Map(summary.sections.map((s) => [s.key, s.statements]));
    expect(sectionState(byKey.get("Conditions")!)).toBe("Populated");
    expect(sectionState(byKey.get("Immunizations")!)).toBe("Unavailable");
    expect(sectionState(byKey.get("Medications")!)).toBe("Empty");
  });
});

describe("renderSummary", () => {
  it("renders all 16 cards in canonical order", () => {
    const root = renderSummary(document, sampleSummary());
    const cards = [...root.querySelectorAll<HTMLElement>(".card")];
    expect(cards.map((c) => c.dataset.section)).toEqual([...SECTION_ORDER]);
  });

  it("enforces canonical order even if the response is shuffled", () => {
    const summary = sampleSummary();
    summary.sections = [...summary.sections].reverse();
    const root = renderSummary(document, summary);
    const cards = [...root.querySelectorAll<HTMLElement>(".card")];
    expect(cards.map((c) => c.dataset.section)).toEqual([...SECTION_ORDER]);
  });

  it("distinguishes Empty and Unavailable badges", () => {
    const root = renderSummary(document, sampleSummary());
    const badge = (key: string) =>
      root.querySelector(`[data-section="${key}"] .badge`)!.textContent;
    expect(badge("Immunizations")).toBe("Unavailable");
    expect(badge("Medications")).toBe("Empty");
    expect(badge("Conditions")).toBe("Populated");
    expect(root.querySelector('[data-section="Immunizations"] .badge')!.className).not.toBe(
      root.querySelector('[data-section="Medications"] .badge')!.className,
    );
  });

  it("shows the disclaimer banner and patient header", () => {
    const summary = sampleSummary();
    const root = renderSummary(document, summary);
    expect(root.querySelector(".disclaimer-banner")!.textContent).toBe(summary.disclaimer);
    expect(root.querySelector(".patient-header")!.textContent).toBe(summary.patient_header);
  });

  it("links evidence chips to source URLs", () => {
    const root = renderSummary(document, sampleSummary());
    const chip = root.querySelector<HTMLAnchorElement>(
      '[data-section="Conditions"] a.evidence-chip',
    )!;
    expect(chip.textContent).toBe("Condition/c1");
    expect(chip.href).toBe("http://fhir.example/Condition/c1");
  });

  it("skips sections omitted by the service without inventing cards", () => {
    const summary = sampleSummary();
    summary.sections = summary.sections.filter((s) => s.key === "Conditions");
    const root = renderSummary(document, summary);
    expect(root.querySelectorAll(".card")).toHaveLength(1);
  });

  it("surfaces backend fallback as a note, not clinical content", () => {
    const summary = sampleSummary({ fallback_violations: ["RecommendationLanguage: …"] });
    const root = renderSummary(document, summary);
    expect(root.querySelector(".fallback-note")!.textContent).toContain("deterministic");
  });
});

describe("renderSectionCard", () => {
  it("renders every statement text verbatim", () => {
    const summary = sampleSummary();
    const statements = summary.sections.find((s) => s.key === "Conditions")!.statements;
    const card = renderSectionCard(document, "Conditions", statements, summary.sources);
    expect(card.querySelector(".statement-text")!.textContent).toBe(statements[0]!.text);
  });
});

describe("renderTranscriptEntry", () => {
  it("renders a grounded answer with evidence chips and timestamp", () => {
    const entry = renderTranscriptEntry(
      document,
      "what conditions?",
      sampleAnswer(),
      new Date("2024-06-01T12:00:00Z"),
    );
    expect(entry.className).not.toContain("qa-refused");
    expect(entry.querySelector(".qa-answer")!.textContent).toContain("diabetes");
    expect(entry.querySelector("a.evidence-chip")).not.toBeNull();
    expect(entry.querySelector("time")!.textContent).toBe("2024-06-01T12:00:00.000Z");
  });

  it("renders refusals distinctly with the refusal text, never empty", () => {
    const answer = sampleAnswer({
      refused: true,
      text: "The retrieved context does not contain information matching this question.",
      evidence_refs: [],
      sources: [],
    });
    const entry = renderTranscriptEntry(document, "gibberish", answer, new Date());
    expect(entry.className).toContain("qa-refused");
    expect(entry.querySelector(".qa-answer")!.textContent).toContain("does not contain");
    expect(entry.querySelector(".evidence-chips")).toBeNull();
  });
});

describe("renderDisclaimer", () => {
  it("is an accessible note", () => {
    const banner = renderDisclaimer(document, "informational only");
    expect(banner.getAttribute("role")).toBe("note");
  });
});
