import type { NodeDetail, RunEvent, RunStatus, SessionView, TreeSnapshot } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly kind: string,
    detail: string,
  ) {
    super(detail);
  }
}

/** Thin typed wrapper over the control-plane endpoints. */
export class ApiClient {
  constructor(
    private readonly base: string = "",
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(this.base + path, init);
    const body = await response.json();
    if (!response.ok) {
      throw new ApiError(response.status, body.error ?? "HttpError", body.detail ?? response.statusText);
    }
    return body as T;
  }

  private post<T>(path: string, payload: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  createSession(task: string): Promise<SessionView> {
    return this.post("/sessions", { task });
  }

  getSession(id: string): Promise<SessionView> {
    return this.request(`/sessions/${id}`);
  }

  submitFeedback(id: string, text: string): Promise<SessionView> {
    return this.post(`/sessions/${id}/feedback`, { text });
  }

  approve(id: string): Promise<{ root_node_id: number; session: SessionView }> {
    return this.post(`/sessions/${id}/approve`, {});
  }

  startRun(sessionId?: string): Promise<{ run_id: string; status: string }> {
    return this.post("/runs", sessionId ? { session_id: sessionId } : {});
  }

  getRun(runId: string): Promise<RunStatus> {
    return this.request(`/runs/${runId}`);
  }

  getTree(runId: string): Promise<TreeSnapshot> {
    return this.request(`/runs/${runId}/tree`);
  }

  getEvents(runId: string, afterSeq = 0): Promise<{ events: RunEvent[] }> {
    return this.request(`/runs/${runId}/events?after_seq=${afterSeq}`);
  }

  getNode(runId: string, nodeId: number): Promise<NodeDetail> {
    return this.request(`/runs/${runId}/nodes/${nodeId}`);
  }
}
