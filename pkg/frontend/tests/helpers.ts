// Fetch stub for client tests: routes keyed by "METHOD path", each call
// recorded so tests can assert exactly what went over the wire.

import type { FetchLike } from "../src/api.js";

export interface RecordedCall {
  method: string;
  path: string;
  body?: unknown;
}

export type RouteHandler = (body: unknown) => Response | object;

export function json(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

export function text(body: string, status = 200, contentType = "text/csv"): Response {
  return new Response(body, { status, headers: { "content-type": contentType } });
}

export function stubFetch(routes: Record<string, RouteHandler>): { fetch: FetchLike; calls: RecordedCall[] } {
  const calls: RecordedCall[] = [];
  const fetch: FetchLike = async (input, init) => {
    const method = (init?.method ?? "GET").toUpperCase();
    const body = typeof init?.body === "string" ? JSON.parse(init.body) : undefined;
    calls.push({ method, path: input, body });
    const handler = routes[`${method} ${input}`];
    if (!handler) {
      return json({ code: "not-found", message: `no stub for ${method} ${input}` }, 404);
    }
    const result = handler(body);
    return result instanceof Response ? result : json(result);
  };
  return { fetch, calls };
}
