/** JSON contracts of the summarization service, mirrored verbatim. */

export type StatementKind = "Fact" | "Trend" | "MissingData";

export interface SummaryStatement {
  text: string;
  section: string;
  kind: StatementKind;
  evidence_refs: string[];
  numeric_claims: [string, string, string][];
}

export interface SummarySection {
  key: string;
  statements: SummaryStatement[];
}

export interface SummaryDocument {
  patient_header: string;
  sections: SummarySection[];
  disclaimer: string;
  ccp_fingerprint: string;
  backend: { kind: string; endpoint_url?: string | null; model_name?: string | null };
  generated_at: string;
  fallback_violations: string[];
  /** evidence_id -> dereferenceable source record URL */
  sources: Record<string, string>;
  /** present only when the service retains summary artifacts */
  artifact_id?: string;
}

export interface AskResponse {
  text: string;
  evidence_refs: string[];
  refused: boolean;
  refusal_reason?: string | null;
  disclaimer: string;
  sources: { evidence_id: string; source_url: string }[];
}

export interface ServiceError {
  message: string;
  reference?: string;
}

/** Canonical rendering order; cards always appear in this order. */
export const SECTION_ORDER: readonly string[] = [
  "PatientInformation",
  "AlertsAndFlags",
  "AllergiesAndIntolerances",
  "Conditions",
  "Medications",
  "LaboratoryAndVitalSigns",
  "Procedures",
  "Encounters",
  "DiagnosticReports",
  "ImagingStudies",
  "Immunizations",
  "FamilyHistory",
  "CarePlans",
  "Goals",
  "Devices",
  "Consent",
];

export const SECTION_LABELS: Record<string, string> = {
  PatientInformation: "Patient Information",
  AlertsAndFlags: "Alerts and Flags",
  AllergiesAndIntolerances: "Allergies and Intolerances",
  Conditions: "Conditions",
  Medications: "Medications",
  LaboratoryAndVitalSigns: "Laboratory and Vital Signs",
  Procedures: "Procedures",
  Encounters: "Encounters",
  DiagnosticReports: "Diagnostic Reports",
  ImagingStudies: "Imaging Studies",
  Immunizations: "Immunizations",
  FamilyHistory: "Family History",
  CarePlans: "Care Plans",
  Goals: "Goals",
  Devices: "Devices",
  Consent: "Consent",
};

export type SectionStateBadge = "Populated" | "Empty" | "Unavailable";

/**
 * Classify a section from the statements the service returned. MissingData
 * notices for unreachable sources always read "... unavailable from source";
 * empty-but-reachable sections read "No ... available".
 */
export function sectionState(statements: SummaryStatement[]): SectionStateBadge {
  if (statements.some((s) => s.kind !== "MissingData")) return "Populated";
  if (statements.some((s) => s.text.endsWith("unavailable from source"))) return "Unavailable";
  return "Empty";
}
