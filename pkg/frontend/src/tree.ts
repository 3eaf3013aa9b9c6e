import type { RunEvent, TreeSnapshot } from "./types.js";
import { escapeHtml } from "./review.js";

export interface TreeNodeView {
  id: number;
  parent: number | null;
  /** Verbatim API reward, or null while the node awaits evaluation. */
  reward: number | null;
  rewardLabel: string;
  modification: string;
  onBestPath: boolean;
}

export interface TreeViewModel {
  nodes: TreeNodeView[];
  edges: { from: number; to: number }[];
  bestNode: number | null;
  iterationCount: number;
}

/** Rewards are display-formatted only; the value itself is the API's. */
export function formatReward(reward: number | null): string {
  return reward === null ? "–" : reward.toFixed(2);
}

export function buildTreeViewModel(snapshot: TreeSnapshot): TreeViewModel {
  let best: { id: number; reward: number } | null = null;
  for (const node of snapshot.nodes) {
    if (node.reward !== null && (best === null || node.reward > best.reward)) {
      best = { id: node.id, reward: node.reward };
    }
  }
  const bestPath = new Set<number>();
  if (best !== null) {
    const byId = new Map(snapshot.nodes.map((n) => [n.id, n]));
    let cursor: number | null = best.id;
    while (cursor !== null) {
      bestPath.add(cursor);
      cursor = byId.get(cursor)?.parent ?? null;
    }
  }
  return {
    nodes: snapshot.nodes.map((node) => ({
      id: node.id,
      parent: node.parent,
      reward: node.reward,
      rewardLabel: formatReward(node.reward),
      modification: node.workflow.parent_modification?.description ?? "",
      onBestPath: bestPath.has(node.id),
    })),
    edges: snapshot.nodes
      .filter((node) => node.parent !== null)
      .map((node) => ({ from: node.parent as number, to: node.id })),
    bestNode: best?.id ?? null,
    iterationCount: snapshot.iteration_count,
  };
}

/**
 * Incremental tree maintenance from the event log, so polling only needs
 * /events?after_seq. Returns the highest seq consumed.
 */
export function applyEvents(snapshot: TreeSnapshot, events: RunEvent[]): number {
  let lastSeq = 0;
  for (const event of events) {
    lastSeq = Math.max(lastSeq, event.seq);
    const payload = event.payload as any;
    if (event.kind === "init") {
      snapshot.nodes = [payload.node];
      snapshot.root = payload.node.id;
      snapshot.iteration_count = 0;
    } else if (event.kind === "refined") {
      snapshot.nodes.push(payload.node);
      const parent = snapshot.nodes.find((n) => n.id === payload.parent);
      if (parent && !parent.children.includes(payload.node.id)) {
        parent.children.push(payload.node.id);
      }
    } else if (event.kind === "backpropagated") {
      const node = snapshot.nodes.find((n) => n.id === payload.node);
      if (node) node.reward = payload.reward;
      snapshot.iteration_count = payload.iteration;
    }
  }
  return lastSeq;
}

export function renderTree(vm: TreeViewModel, stale = false): string {
  const badge = stale ? '<span class="stale-badge">connection lost — retrying</span>' : "";
  const nodes = vm.nodes
    .map((node) => {
      const classes = ["node"];
      if (node.id === vm.bestNode) classes.push("best");
      if (node.onBestPath) classes.push("best-path");
      const title = node.modification ? ` title="${escapeHtml(node.modification)}"` : "";
      return `<li class="${classes.join(" ")}" data-node="${node.id}"${title}>` +
        `<span class="node-id">${node.id}</span>` +
        `<span class="node-reward">${node.rewardLabel}</span></li>`;
    })
    .join("");
  return `
<div class="tree" data-iterations="${vm.iterationCount}">
  <header><h3>Search tree</h3>${badge}<span class="node-count">${vm.nodes.length} nodes</span></header>
  <ul class="nodes">${nodes}</ul>
</div>`;
}
