import type { FetchLike } from "../src/api.js";

export interface Route {
  method: string;
  path: RegExp;
  /** Either a fixed body or a queue consumed one response per call. */
  reply: unknown | unknown[];
  status?: number;
}

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

/** A scripted backend: first matching route wins, queues advance per call. */
export function scriptedFetch(routes: Route[]): FetchLike & { calls: string[] } {
  const cursors = new Map<Route, number>();
  const fn = (async (url: string, init?: RequestInit) => {
    const method = (init?.method ?? "GET").toUpperCase();
    fn.calls.push(`${method} ${url}`);
    for (const route of routes) {
      if (route.method === method && route.path.test(url)) {
        let body = route.reply;
        if (Array.isArray(route.reply)) {
          const i = cursors.get(route) ?? 0;
          body = route.reply[Math.min(i, route.reply.length - 1)];
          cursors.set(route, i + 1);
        }
        return jsonResponse(body, route.status ?? 200);
      }
    }
    throw new Error(`no scripted route for ${method} ${url}`);
  }) as FetchLike & { calls: string[] };
  fn.calls = [];
  return fn;
}
