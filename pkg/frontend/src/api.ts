/** Thin typed client for the reporting-engine HTTP API.
 *
 * The workspace never computes clinical values; it displays exactly what
 * these endpoints return. Raw response text is kept alongside the parsed
 * body so displayed numbers stay byte-equal to the wire payload.
 */

import type { ApiError, AuditEvent, SessionSnapshot } from "./types.js";

export class EngineApiError extends Error {
  readonly status: number;
  readonly payload: ApiError;

  constructor(status: number, payload: ApiError) {
    super(`${payload.code}: ${payload.message}`);
    this.status = status;
    this.payload = payload;
  }
}

export interface FetchLike {
  (input: string, init?: RequestInit): Promise<Response>;
}

export class EngineClient {
  private readonly base: string;
  private readonly token: string;
  private readonly fetchImpl: FetchLike;

  constructor(base: string, token: string, fetchImpl: FetchLike = fetch) {
    this.base = base.replace(/\/$/, "");
    this.token = token;
    this.fetchImpl = fetchImpl;
  }

  private async request(path: string, init: RequestInit = {}): Promise<Response> {
    const response = await this.fetchImpl(`${this.base}${path}`, {
      ...init,
      headers: {
        Authorization: `Bearer ${this.token}`,
        ...(init.body ? { "Content-Type": "application/json" } : {}),
        ...(init.headers ?? {}),
      },
    });
    if (!response.ok) {
      let payload: ApiError;
      try {
        payload = (await response.json()) as ApiError;
      } catch {
        payload = { code: "http_error", message: response.statusText, target: null };
      }
      throw new EngineApiError(response.status, payload);
    }
    return response;
  }

  async getSession(sessionId: string): Promise<SessionSnapshot> {
    const response = await this.request(`/sessions/${sessionId}`);
    return (await response.json()) as SessionSnapshot;
  }

  async listSessions(): Promise<string[]> {
    const response = await this.request(`/sessions`);
    const body = (await response.json()) as { sessions: string[] };
    return body.sessions;
  }

  async patchFinding(
    sessionId: string,
    findingId: string,
    body: { path: string; value: unknown } | { review: "accept" | "reject" },
  ): Promise<SessionSnapshot> {
    const response = await this.request(`/sessions/${sessionId}/findings/${findingId}`, {
      method: "PATCH",
      body: JSON.stringify(body),
    });
    return (await response.json()) as SessionSnapshot;
  }

  async confirmComparison(sessionId: string): Promise<SessionSnapshot> {
    const response = await this.request(`/sessions/${sessionId}/comparison-confirmations`, {
      method: "POST",
    });
    return (await response.json()) as SessionSnapshot;
  }

  async draft(sessionId: string): Promise<SessionSnapshot> {
    const response = await this.request(`/sessions/${sessionId}/draft`, { method: "POST" });
    return (await response.json()) as SessionSnapshot;
  }

  async acknowledge(sessionId: string, issueId: string): Promise<SessionSnapshot> {
    const response = await this.request(`/sessions/${sessionId}/acknowledgments`, {
      method: "POST",
      body: JSON.stringify({ issue_id: issueId }),
    });
    return (await response.json()) as SessionSnapshot;
  }

  async approve(sessionId: string): Promise<SessionSnapshot> {
    const response = await this.request(`/sessions/${sessionId}/approve`, { method: "POST" });
    return (await response.json()) as SessionSnapshot;
  }

  async export(sessionId: string): Promise<SessionSnapshot> {
    const response = await this.request(`/sessions/${sessionId}/export`, { method: "POST" });
    return (await response.json()) as SessionSnapshot;
  }

  async downloadExport(sessionId: string, which: "fhir" | "sr"): Promise<ArrayBuffer> {
    const response = await this.request(`/sessions/${sessionId}/exports/${which}`);
    return response.arrayBuffer();
  }

  async audit(sessionId: string): Promise<AuditEvent[]> {
    const response = await this.request(`/sessions/${sessionId}/audit`);
    const body = (await response.json()) as { events: AuditEvent[] };
    return body.events;
  }
}
