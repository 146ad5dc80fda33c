import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { dirname, join } from "node:path";

import type { FetchLike } from "../src/api.js";
import type { SessionSnapshot } from "../src/types.js";

const here = dirname(fileURLToPath(import.meta.url));

export function fixture(name: string): SessionSnapshot {
  return JSON.parse(readFileSync(join(here, "fixtures", name), "utf-8")) as SessionSnapshot;
}

export function fixtureText(name: string): string {
  return readFileSync(join(here, "fixtures", name), "utf-8");
}

export interface RecordedCall {
  url: string;
  method: string;
  body: unknown;
}

/** Mocked fetch replaying canned responses and recording every call. */
export function mockFetch(
  routes: Record<string, { status?: number; body: unknown } | ((call: RecordedCall) => { status?: number; body: unknown })>,
): { fetchImpl: FetchLike; calls: RecordedCall[] } {
  const calls: RecordedCall[] = [];
  const fetchImpl: FetchLike = async (url, init) => {
    const method = init?.method ?? "GET";
    const call: RecordedCall = {
      url,
      method,
      body: init?.body ? JSON.parse(init.body as string) : undefined,
    };
    calls.push(call);
    const key = `${method} ${url}`;
    const route = routes[key];
    if (!route) {
      return new Response(JSON.stringify({ code: "not_found", message: `no route ${key}`, target: null }), {
        status: 404,
        headers: { "Content-Type": "application/json" },
      });
    }
    const result = typeof route === "function" ? route(call) : route;
    return new Response(JSON.stringify(result.body), {
      status: result.status ?? 200,
      headers: { "Content-Type": "application/json" },
    });
  };
  return { fetchImpl, calls };
}
