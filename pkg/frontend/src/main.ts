// Browser entrypoint: wires the review screen and tree view into the page
// served at /ui by the control plane.

import { ApiClient } from "./api.js";
import { SessionController, RunWatcher } from "./controller.js";
import { renderReview } from "./review.js";
import { formatReward, renderTree } from "./tree.js";

const api = new ApiClient("");

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

async function showNodeDetail(runId: string, nodeId: number): Promise<void> {
  const detail = await api.getNode(runId, nodeId);
  const matrix = detail.score_matrix;
  const rows = matrix
    ? matrix.scores
        .map(
          (row, i) =>
            `<tr><th>sample ${i}</th>${row.map((v) => `<td>${formatReward(v)}</td>`).join("")}</tr>`,
        )
        .join("")
    : "";
  el("node-detail").innerHTML = `
    <h3>node ${detail.id} — reward ${formatReward(detail.reward)}</h3>
    <pre class="script">${detail.workflow.code.script.replace(/</g, "&lt;")}</pre>
    ${matrix ? `<table><tr><th></th>${matrix.metric_names.map((n) => `<th>${n}</th>`).join("")}</tr>${rows}</table>` : ""}
    <pre class="suggestions">${detail.suggestions.replace(/</g, "&lt;")}</pre>`;
}

function watchRun(runId: string): void {
  const watcher = new RunWatcher(api, runId, (vm, stale) => {
    el("tree").innerHTML = renderTree(vm, stale);
    el("tree")
      .querySelectorAll<HTMLElement>("li.node")
      .forEach((li) => {
        li.onclick = () => void showNodeDetail(runId, Number(li.dataset.node));
      });
  });
  void watcher.pollUntilDone(1000, (ms) => new Promise((r) => setTimeout(r, ms)));
}

function bindReviewForm(controller: SessionController): void {
  const container = el("review");
  container.onsubmit = (event) => {
    event.preventDefault();
    const textarea = container.querySelector<HTMLTextAreaElement>("textarea[name=feedback]");
    if (textarea && textarea.value.trim()) {
      void controller.submitFeedback(textarea.value.trim()).catch(() => {});
    }
  };
  container.onclick = (event) => {
    const target = event.target as HTMLElement;
    if (target.matches("button[name=approve]")) {
      void controller
        .approve()
        .then(() => api.startRun(controller.session!.id))
        .then(({ run_id }) => watchRun(run_id))
        .catch(() => {});
    }
  };
}

export function boot(): void {
  const controller = new SessionController(api, (vm) => {
    el("review").innerHTML = renderReview(vm);
  });
  bindReviewForm(controller);
  el("start-form").onsubmit = (event) => {
    event.preventDefault();
    const input = document.querySelector<HTMLInputElement>("#task-input");
    if (input && input.value.trim()) void controller.start(input.value.trim());
  };
}

if (typeof document !== "undefined" && document.readyState !== "loading") {
  boot();
} else if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", boot);
}
