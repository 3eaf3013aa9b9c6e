import { ApiClient, ApiError } from "./api.js";
import { buildReviewViewModel, ReviewViewModel } from "./review.js";
import { applyEvents, buildTreeViewModel, TreeViewModel } from "./tree.js";
import type { SessionView, TreeSnapshot } from "./types.js";

/**
 * Drives one review session. The view-model status mirrors the server's
 * session status exactly, with one optimistic exception: while a feedback
 * submission is in flight the status reads "revising" until the server
 * answers with the next round.
 */
export class SessionController {
  session: SessionView | null = null;
  rootNodeId: number | null = null;
  lastError: string | null = null;

  constructor(
    private readonly api: ApiClient,
    private readonly onChange: (vm: ReviewViewModel) => void = () => {},
  ) {}

  private emit(): void {
    if (this.session) this.onChange(buildReviewViewModel(this.session));
  }

  async start(task: string): Promise<SessionView> {
    this.session = await this.api.createSession(task);
    this.emit();
    return this.session;
  }

  async submitFeedback(text: string): Promise<SessionView> {
    if (!this.session) throw new Error("no active session");
    const optimistic: SessionView = { ...this.session, status: "revising" };
    this.session = optimistic;
    this.emit();
    try {
      this.session = await this.api.submitFeedback(optimistic.id, text);
    } catch (err) {
      // revision failed server-side; fall back to the authoritative state
      this.session = await this.api.getSession(optimistic.id);
      this.lastError = err instanceof ApiError ? err.message : String(err);
      this.emit();
      throw err;
    }
    this.lastError = null;
    this.emit();
    return this.session;
  }

  async approve(): Promise<number> {
    if (!this.session) throw new Error("no active session");
    const result = await this.api.approve(this.session.id);
    this.session = result.session;
    this.rootNodeId = result.root_node_id;
    this.emit();
    return result.root_node_id;
  }
}

/**
 * Watches a run by long-polling /events?after_seq and maintaining the tree
 * snapshot incrementally. A failed poll marks the view stale; the next
 * successful one clears it.
 */
export class RunWatcher {
  snapshot: TreeSnapshot = { root: null, iteration_count: 0, nodes: [] };
  afterSeq = 0;
  stale = false;

  constructor(
    private readonly api: ApiClient,
    private readonly runId: string,
    private readonly onChange: (vm: TreeViewModel, stale: boolean) => void = () => {},
  ) {}

  viewModel(): TreeViewModel {
    return buildTreeViewModel(this.snapshot);
  }

  async poll(): Promise<TreeViewModel> {
    try {
      const { events } = await this.api.getEvents(this.runId, this.afterSeq);
      this.afterSeq = Math.max(this.afterSeq, applyEvents(this.snapshot, events));
      this.stale = false;
    } catch {
      this.stale = true;
    }
    const vm = this.viewModel();
    this.onChange(vm, this.stale);
    return vm;
  }

  async pollUntilDone(intervalMs: number, sleep: (ms: number) => Promise<void>): Promise<TreeViewModel> {
    for (;;) {
      await this.poll();
      const run = await this.api.getRun(this.runId).catch(() => null);
      if (run && run.status !== "running" && run.status !== "pending") {
        return await this.poll();
      }
      await sleep(intervalMs);
    }
  }
}
