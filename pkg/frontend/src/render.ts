/** Pure DOM builders: everything shown comes verbatim from service responses;
 * the client never synthesizes clinical content. */

import type { AskResponse, SummaryDocument, SummaryStatement } from "./types.js";
import { SECTION_LABELS, SECTION_ORDER, sectionState } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderEvidenceChips(
  doc: Document,
  refs: readonly string[],
  sources: Record<string, string>,
): HTMLElement {
  const wrap = el(doc, "span", "evidence-chips");
  for (const ref of refs) {
    const url = sources[ref];
    if (url) {
      const chip = el(doc, "a", "evidence-chip", ref);
      chip.href = url;
      chip.target = "_blank";
      chip.rel = "noopener";
      wrap.appendChild(chip);
    } else {
      wrap.appendChild(el(doc, "span", "evidence-chip evidence-chip-unlinked", ref));
    }
  }
  return wrap;
}

function renderStatement(
  doc: Document,
  statement: SummaryStatement,
  sources: Record<string, string>,
): HTMLElement {
  const row = el(doc, "li", `statement statement-${statement.kind.toLowerCase()}`);
  row.appendChild(el(doc, "span", "statement-kind", statement.kind));
  row.appendChild(el(doc, "span", "statement-text", statement.text));
  if (statement.evidence_refs.length > 0) {
    row.appendChild(renderEvidenceChips(doc, statement.evidence_refs, sources));
  }
  return row;
}

export function renderSectionCard(
  doc: Document,
  key: string,
  statements: SummaryStatement[],
  sources: Record<string, string>,
): HTMLElement {
  const state = sectionState(statements);
  const card = el(doc, "section", `card card-${state.toLowerCase()}`);
  card.dataset.section = key;
  card.dataset.state = state;
  const header = el(doc, "header", "card-header");
  header.appendChild(el(doc, "h2", "card-title", SECTION_LABELS[key] ?? key));
  header.appendChild(el(doc, "span", `badge badge-${state.toLowerCase()}`, state));
  card.appendChild(header);
  const list = el(doc, "ul", "card-statements");
  for (const statement of statements) {
    list.appendChild(renderStatement(doc, statement, sources));
  }
  card.appendChild(list);
  return card;
}

export function renderDisclaimer(doc: Document, text: string): HTMLElement {
  const banner = el(doc, "aside", "disclaimer-banner", text);
  banner.setAttribute("role", "note");
  return banner;
}

export function renderSummary(doc: Document, summary: SummaryDocument): HTMLElement {
  const root = el(doc, "article", "summary");
  root.appendChild(el(doc, "h1", "patient-header", summary.patient_header));
  root.appendChild(renderDisclaimer(doc, summary.disclaimer));
  const byKey = new Map(summary.sections.map((s) => [s.key, s.statements]));
  // Canonical order regardless of response ordering; omitted sections
  // (omit-empty mode) are simply not rendered.
  for (const key of SECTION_ORDER) {
    const statements = byKey.get(key);
    if (statements === undefined) continue;
    root.appendChild(renderSectionCard(doc, key, statements, summary.sources ?? {}));
  }
  if (summary.fallback_violations.length > 0) {
    const note = el(
      doc,
      "p",
      "fallback-note",
      `Hosted backend output was rejected; showing the deterministic summary. (${summary.fallback_violations.length} violation(s))`,
    );
    root.appendChild(note);
  }
  return root;
}

export function renderTranscriptEntry(
  doc: Document,
  question: string,
  answer: AskResponse,
  askedAt: Date,
): HTMLElement {
  const entry = el(doc, "div", answer.refused ? "qa-entry qa-refused" : "qa-entry");
  entry.appendChild(el(doc, "p", "qa-question", question));
  entry.appendChild(el(doc, "time", "qa-time", askedAt.toISOString()));
  // Refusals carry the service's refusal text; never render an empty answer.
  entry.appendChild(el(doc, "p", "qa-answer", answer.text));
  if (!answer.refused && answer.sources.length > 0) {
    const sources: Record<string, string> = {};
    for (const s of answer.sources) sources[s.evidence_id] = s.source_url;
    entry.appendChild(
      renderEvidenceChips(
        doc,
        answer.sources.map((s) => s.evidence_id),
        sources,
      ),
    );
  }
  return entry;
}

export function renderError(doc: Document, message: string, onRetry?: () => void): HTMLElement {
  const box = el(doc, "div", "error-box");
  box.setAttribute("role", "alert");
  box.appendChild(el(doc, "p", "error-message", message));
  if (onRetry) {
    const button = el(doc, "button", "retry-button", "Retry");
    button.addEventListener("click", onRetry);
    box.appendChild(button);
  }
  return box;
}
