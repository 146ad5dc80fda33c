/** Payload shapes of the reporting-engine HTTP API (read side). */

export type SessionState =
  | "created"
  | "parsed"
  | "under_review"
  | "approved"
  | "exported"
  | "rejected";

export type SpanKind =
  | "finding_term"
  | "anatomy"
  | "laterality"
  | "measurement"
  | "unit"
  | "morphology"
  | "change"
  | "comparison_date"
  | "negation_cue"
  | "uncertainty_cue";

export interface ExtractionSpan {
  start: number; // byte offset into the UTF-8 transcript
  end: number;
  kind: SpanKind;
}

export interface SafetyFlag {
  start: number;
  end: number;
  reason: "laterality" | "negation" | "measurement" | "unit" | "comparison_date";
  note: string;
}

export interface Extraction {
  transcript: string;
  spans: ExtractionSpan[];
  finding_spans: Record<string, number[]>;
  safety_flags: SafetyFlag[];
  unparsed_sentences: [number, number][];
}

export interface FindingDoc {
  finding: {
    finding_id: string;
    type: string;
    presence: "present" | "absent";
    uncertainty: string;
    location: { anatomical_site?: string; laterality: string };
    attributes: Record<string, unknown>;
    comparison?: Record<string, unknown>;
  };
  evidence: Record<string, unknown>;
  terminology: { unit: string; finding_code?: unknown; anatomy_code?: unknown };
  provenance: {
    source?: string;
    review_status: string;
    reviewer_role: string;
    model_version?: string;
  };
  final_report_text?: { sentence: string; section: string };
}

export interface Issue {
  rule_id: string;
  severity: "error" | "warning" | "info";
  target: string;
  message: string;
  issue_id: string;
}

export interface ComparisonRowDoc {
  lesion_id: string;
  status: string;
  warnings: string[];
  confirmed: boolean;
  finding_id?: string;
  display: {
    lesion_id: string;
    location: string;
    current_size: string;
    prior_size: string;
    status: string;
    current_evidence: string;
    prior_evidence: string;
  };
}

export interface SessionSnapshot {
  schema_version: string;
  session_id: string;
  state: SessionState;
  study: Record<string, unknown>;
  template: { template_id: string; version: number; score: number; mismatches: string[] } | null;
  transcript: string | null;
  extraction: Extraction | null;
  findings: FindingDoc[];
  comparison_rows: ComparisonRowDoc[];
  report_sections: { name: string; text: string }[];
  impression_items: { text: string; source_finding_ids: string[] }[];
  issues: Issue[];
  acknowledgments: { issue_id: string; actor_id: string; timestamp: string }[];
  composition_notes: string[];
  exports: { fhir: string; sr: string } | null;
}

export interface AuditEvent {
  seq: number;
  timestamp: string;
  actor: { id: string; role: string };
  kind: string;
  versions: Record<string, string>;
}

export interface ApiError {
  code: string;
  message: string;
  target: string | null;
  issues?: Issue[];
}
