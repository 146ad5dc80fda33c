/** DOM render functions. Everything displayed comes verbatim from the
 * API payload: these functions format and arrange, never compute. */

import { highlightedSpanCount, segmentTranscript, SpanOffsetError } from "./highlight.js";
import type { ComparisonRowDoc, FindingDoc, Issue, SessionSnapshot } from "./types.js";

const SAFETY_KINDS = new Set([
  "laterality",
  "measurement",
  "unit",
  "negation_cue",
  "comparison_date",
]);

function el(tag: string, className?: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderErrorBanner(message: string): HTMLElement {
  const banner = el("div", "error-banner");
  banner.setAttribute("role", "alert");
  banner.textContent = message;
  return banner;
}

/** Annotated transcript: every span highlighted, safety kinds distinct. */
export function renderExtraction(snapshot: SessionSnapshot): HTMLElement {
  const container = el("section", "transcript-view");
  const extraction = snapshot.extraction;
  if (!extraction) {
    container.append(el("p", "placeholder", "No transcript submitted yet."));
    return container;
  }
  const flagBadge = el("span", "flag-count-badge", String(extraction.safety_flags.length));
  flagBadge.dataset.count = String(extraction.safety_flags.length);
  const header = el("header");
  header.append(el("h2", undefined, "Transcript"), flagBadge);
  container.append(header);

  let segments;
  try {
    segments = segmentTranscript(extraction.transcript, extraction.spans);
  } catch (error) {
    if (error instanceof SpanOffsetError) {
      container.append(renderErrorBanner(`Annotation offsets are invalid: ${error.message}`));
      return container;
    }
    throw error;
  }
  const body = el("p", "transcript-text");
  const spanToFinding = new Map<number, string>();
  for (const [findingId, indexes] of Object.entries(extraction.finding_spans)) {
    for (const index of indexes) spanToFinding.set(index, findingId);
  }
  for (const segment of segments) {
    if (segment.spanIndexes.length === 0) {
      body.append(document.createTextNode(segment.text));
      continue;
    }
    const mark = el("mark", `span ${segment.kinds.map((k) => `kind-${k}`).join(" ")}`);
    mark.textContent = segment.text;
    mark.dataset.spanIndexes = segment.spanIndexes.join(",");
    if (segment.kinds.some((kind) => SAFETY_KINDS.has(kind))) {
      mark.classList.add("safety-critical");
    }
    const owner = segment.spanIndexes.map((i) => spanToFinding.get(i)).find(Boolean);
    if (owner) mark.dataset.findingId = owner;
    body.append(mark);
  }
  body.dataset.renderedSpanCount = String(highlightedSpanCount(segments));
  container.append(body);

  if (extraction.safety_flags.length > 0) {
    const list = el("ul", "safety-flags");
    for (const flag of extraction.safety_flags) {
      list.append(el("li", `flag flag-${flag.reason}`, `${flag.reason}: ${flag.note}`));
    }
    container.append(list);
  }
  if (extraction.unparsed_sentences.length > 0) {
    container.append(
      el("p", "unparsed-notice", `${extraction.unparsed_sentences.length} sentence(s) not parsed`),
    );
  }
  return container;
}

const PROVENANCE_BADGES: Record<string, string> = {
  dictation_extracted: "dictation",
  viewer_measurement_import: "import",
  worksheet_import: "worksheet",
  dicom_metadata: "import",
  prior_report_parse: "prior report",
  ai_module_output: "AI",
  template_default: "template",
  manual_entry: "manual",
  radiologist_confirmed: "confirmed",
};

function tableWithHeader(className: string, titles: string[]): { table: HTMLElement; body: HTMLElement } {
  const table = el("table", className);
  const head = el("thead");
  const headRow = el("tr");
  for (const title of titles) {
    headRow.append(el("th", undefined, title));
  }
  head.append(headRow);
  const body = el("tbody");
  table.append(head, body);
  return { table, body };
}

function cell(text?: string): HTMLElement {
  return el("td", undefined, text);
}

export function renderFindingTable(
  findings: FindingDoc[],
  onReview?: (findingId: string, accept: boolean) => void,
): HTMLElement {
  const { table, body } = tableWithHeader("finding-table", [
    "ID", "Finding", "Presence", "Attributes", "Provenance", "Review", "",
  ]);
  for (const doc of findings) {
    const row = el("tr");
    row.dataset.findingId = doc.finding.finding_id;
    row.append(
      cell(doc.finding.finding_id),
      cell(doc.finding.type),
      cell(doc.finding.presence),
    );
    const attrs = Object.entries(doc.finding.attributes)
      .map(([key, value]) => `${key}=${typeof value === "object" ? JSON.stringify(value) : String(value)}`)
      .join(", ");
    row.append(cell(attrs));
    const source = doc.provenance.source ?? "manual_entry";
    const badge = el("span", `badge badge-${source}`, PROVENANCE_BADGES[source] ?? source);
    if (doc.provenance.model_version) {
      badge.title = `model ${doc.provenance.model_version}`;
    }
    const badgeCell = cell();
    badgeCell.append(badge);
    row.append(badgeCell, cell(doc.provenance.review_status));
    const actions = cell();
    if (onReview) {
      const accept = el("button", "accept", "accept") as HTMLButtonElement;
      accept.addEventListener("click", () => onReview(doc.finding.finding_id, true));
      const reject = el("button", "reject", "reject") as HTMLButtonElement;
      reject.addEventListener("click", () => onReview(doc.finding.finding_id, false));
      actions.append(accept, reject);
    }
    row.append(actions);
    body.append(row);
  }
  return table;
}

export function renderComparisonTable(rows: ComparisonRowDoc[]): HTMLElement {
  const { table, body } = tableWithHeader("comparison-table", [
    "Lesion", "Location", "Current", "Prior", "Status", "Evidence", "Warnings",
  ]);
  for (const row of rows) {
    const tr = el("tr");
    tr.dataset.lesionId = row.lesion_id;
    tr.append(
      cell(row.display.lesion_id),
      cell(row.display.location),
      cell(row.display.current_size),
      cell(row.display.prior_size),
      cell(row.display.status),
      cell([row.display.current_evidence, row.display.prior_evidence].filter(Boolean).join(" | ")),
      cell(row.warnings.join(", ")),
    );
    if (!row.confirmed) tr.classList.add("unconfirmed");
    body.append(tr);
  }
  return table;
}

export function renderIssueList(
  issues: Issue[],
  acknowledged: Set<string>,
  onAcknowledge?: (issueId: string) => void,
): HTMLElement {
  const list = el("ul", "issue-list");
  for (const issue of issues) {
    const item = el("li", `issue severity-${issue.severity}`);
    item.dataset.issueId = issue.issue_id;
    item.append(
      el("span", "rule", issue.rule_id),
      el("span", "target", issue.target),
      el("span", "message", issue.message),
    );
    if (acknowledged.has(issue.issue_id)) {
      item.classList.add("acknowledged");
    } else if (issue.severity === "warning" && onAcknowledge) {
      const button = el("button", "acknowledge", "acknowledge") as HTMLButtonElement;
      button.addEventListener("click", () => onAcknowledge(issue.issue_id));
      item.append(button);
    }
    list.append(item);
  }
  return list;
}

export function renderReport(snapshot: SessionSnapshot): HTMLElement {
  const container = el("section", "report-view");
  for (const section of snapshot.report_sections) {
    container.append(el("h3", undefined, section.name));
    const pre = el("pre", "section-text");
    pre.textContent = section.text;
    container.append(pre);
  }
  return container;
}

export function exportAllowed(snapshot: SessionSnapshot): boolean {
  return snapshot.state === "approved" || snapshot.state === "exported";
}

export function renderStateBadge(snapshot: SessionSnapshot): HTMLElement {
  return el("span", `state-badge state-${snapshot.state}`, snapshot.state);
}
