/** Review workspace wiring: one active session, server state is truth.
 *
 * Every action round-trips through the API and replaces the local
 * snapshot with the server's; stale-state conflicts (409) surface as a
 * reload prompt instead of being retried silently.
 */

import { EngineApiError, EngineClient } from "./api.js";
import type { SessionSnapshot } from "./types.js";
import {
  exportAllowed,
  renderComparisonTable,
  renderErrorBanner,
  renderExtraction,
  renderFindingTable,
  renderIssueList,
  renderReport,
  renderStateBadge,
} from "./views.js";

export class Workspace {
  private snapshot: SessionSnapshot | null = null;

  constructor(
    private readonly client: EngineClient,
    private readonly root: HTMLElement,
  ) {}

  async load(sessionId: string): Promise<void> {
    this.snapshot = await this.client.getSession(sessionId);
    this.render();
  }

  current(): SessionSnapshot {
    if (!this.snapshot) throw new Error("no session loaded");
    return this.snapshot;
  }

  private replace(snapshot: SessionSnapshot): void {
    this.snapshot = snapshot;
    this.render();
  }

  private async act(action: () => Promise<SessionSnapshot>): Promise<void> {
    try {
      this.replace(await action());
    } catch (error) {
      if (error instanceof EngineApiError && error.status === 409) {
        this.showBanner(`Blocked: ${error.payload.message}. Reload the session and retry.`);
        return;
      }
      if (error instanceof EngineApiError) {
        this.showBanner(`${error.payload.code}: ${error.payload.message}`);
        return;
      }
      throw error;
    }
  }

  private showBanner(message: string): void {
    this.root.querySelector(".error-banner")?.remove();
    this.root.prepend(renderErrorBanner(message));
  }

  async reviewFinding(findingId: string, accept: boolean): Promise<void> {
    const sessionId = this.current().session_id;
    await this.act(() =>
      this.client.patchFinding(sessionId, findingId, { review: accept ? "accept" : "reject" }),
    );
  }

  async editFinding(findingId: string, path: string, value: unknown): Promise<void> {
    const sessionId = this.current().session_id;
    await this.act(() => this.client.patchFinding(sessionId, findingId, { path, value }));
  }

  async acknowledge(issueId: string): Promise<void> {
    const sessionId = this.current().session_id;
    await this.act(() => this.client.acknowledge(sessionId, issueId));
  }

  async confirmComparison(): Promise<void> {
    const sessionId = this.current().session_id;
    await this.act(() => this.client.confirmComparison(sessionId));
  }

  async draft(): Promise<void> {
    const sessionId = this.current().session_id;
    await this.act(() => this.client.draft(sessionId));
  }

  /** Two-step sign-off: approve must succeed before export is attempted. */
  async approveAndExport(): Promise<void> {
    const sessionId = this.current().session_id;
    try {
      this.replace(await this.client.approve(sessionId));
    } catch (error) {
      if (error instanceof EngineApiError) {
        const issues = error.payload.issues ?? [];
        const detail = issues.map((i) => `${i.rule_id} ${i.target}: ${i.message}`).join("; ");
        this.showBanner(`Approval blocked: ${error.payload.message}${detail ? ` (${detail})` : ""}`);
        return;
      }
      throw error;
    }
    await this.act(() => this.client.export(sessionId));
  }

  render(): void {
    const snapshot = this.current();
    this.root.replaceChildren();

    const header = document.createElement("header");
    const title = document.createElement("h1");
    title.textContent = `Session ${snapshot.session_id}`;
    header.append(title, renderStateBadge(snapshot));
    this.root.append(header);

    this.root.append(renderExtraction(snapshot));
    this.root.append(
      renderFindingTable(snapshot.findings, (findingId, accept) => {
        void this.reviewFinding(findingId, accept);
      }),
    );
    this.root.append(renderComparisonTable(snapshot.comparison_rows));
    const acknowledged = new Set(snapshot.acknowledgments.map((a) => a.issue_id));
    this.root.append(
      renderIssueList(snapshot.issues, acknowledged, (issueId) => {
        void this.acknowledge(issueId);
      }),
    );
    this.root.append(renderReport(snapshot));

    const actions = document.createElement("footer");
    const confirmButton = document.createElement("button");
    confirmButton.textContent = "Confirm comparison";
    confirmButton.addEventListener("click", () => void this.confirmComparison());
    const draftButton = document.createElement("button");
    draftButton.textContent = "Draft report";
    draftButton.addEventListener("click", () => void this.draft());
    const approveButton = document.createElement("button");
    approveButton.id = "approve-and-export";
    approveButton.textContent = "Approve and export";
    approveButton.addEventListener("click", () => void this.approveAndExport());
    const exportButton = document.createElement("button");
    exportButton.id = "export-only";
    exportButton.textContent = "Download exports";
    exportButton.disabled = !exportAllowed(snapshot);
    actions.append(confirmButton, draftButton, approveButton, exportButton);
    this.root.append(actions);
  }
}

export function bootstrap(): void {
  const params = new URLSearchParams(window.location.search);
  const base = params.get("api") ?? "";
  const token = params.get("token") ?? "dev-radiologist";
  const session = params.get("session");
  const root = document.getElementById("workspace");
  if (!root) throw new Error("missing #workspace element");
  const workspace = new Workspace(new EngineClient(base, token), root);
  if (session) {
    void workspace.load(session);
  } else {
    root.textContent = "Pass ?session=RS-0001 (and optionally ?api= and ?token=) to load a session.";
  }
}

if (typeof document !== "undefined" && document.getElementById("workspace")) {
  bootstrap();
}
