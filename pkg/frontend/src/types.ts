// Wire types for the control-plane HTTP API. The console never computes
// rewards or overlaps itself; every number shown comes from one of these
// fields.

export interface SampleDoc {
  payload: Record<string, unknown>;
  source_node: number;
  index: number;
}

export interface ModificationDoc {
  description: string;
  kind: string;
}

export interface WorkflowDoc {
  id: string;
  prompts: { templates: Record<string, string>; placeholders?: Record<string, string[]> };
  code: { script: string; interpreter_hint: string; entry_contract: string };
  created_at: string | null;
  parent_modification: ModificationDoc | null;
}

export interface FeedbackEntry {
  session_id: string;
  text: string;
  submitted_at: string;
}

export type SessionStatus = "awaiting-feedback" | "revising" | "approved";

export interface SessionView {
  id: string;
  task: string;
  round: number;
  status: SessionStatus;
  workflow: WorkflowDoc;
  samples: SampleDoc[];
  feedback_history: FeedbackEntry[];
  root_node_id: number | null;
  remaining_rounds: number;
}

export interface TreeNodeDoc {
  id: number;
  reward: number | null;
  parent: number | null;
  children: number[];
  workflow: WorkflowDoc;
  created_at: string;
}

export interface TreeSnapshot {
  root: number | null;
  iteration_count: number;
  nodes: TreeNodeDoc[];
}

export interface RunEvent {
  seq: number;
  timestamp: string;
  kind: string;
  payload: Record<string, unknown>;
}

export interface RunStatus {
  run_id: string;
  status: "pending" | "running" | "finished" | "aborted" | "error";
  report: Record<string, unknown> | null;
  error: string | null;
}

export interface NodeDetail {
  id: number;
  parent: number | null;
  reward: number | null;
  workflow: WorkflowDoc;
  samples: SampleDoc[];
  score_matrix: { scores: number[][]; justifications: string[][]; metric_names: string[] } | null;
  suggestions: string;
  workflow_quality: Record<string, unknown> | null;
}
