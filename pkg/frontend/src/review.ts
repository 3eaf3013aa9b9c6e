import type { SessionView } from "./types.js";

const MAX_ROUNDS = 3;

export interface ReviewViewModel {
  sessionId: string;
  task: string;
  status: SessionView["status"];
  round: number;
  /** 3 - round, clamped at zero; shown in the header counter. */
  remainingRounds: number;
  promptTemplates: { name: string; text: string }[];
  script: string;
  sampleCards: { index: number; body: string }[];
  priorFeedback: { round: number; text: string }[];
  /** Inputs are disabled once approved or while a revision is in flight. */
  inputsEnabled: boolean;
}

export function buildReviewViewModel(session: SessionView): ReviewViewModel {
  const remaining = Math.max(0, session.remaining_rounds ?? MAX_ROUNDS - session.round);
  return {
    sessionId: session.id,
    task: session.task,
    status: session.status,
    round: session.round,
    remainingRounds: remaining,
    promptTemplates: Object.entries(session.workflow.prompts.templates).map(([name, text]) => ({ name, text })),
    script: session.workflow.code.script,
    sampleCards: session.samples.map((s) => ({
      index: s.index,
      body: JSON.stringify(s.payload, null, 2),
    })),
    priorFeedback: session.feedback_history.map((entry, i) => ({ round: i + 1, text: entry.text })),
    inputsEnabled: session.status === "awaiting-feedback" && remaining > 0,
  };
}

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Renders the review screen as an HTML fragment (no framework). */
export function renderReview(vm: ReviewViewModel): string {
  const counter =
    vm.status === "approved"
      ? "approved"
      : `${vm.remainingRounds} round${vm.remainingRounds === 1 ? "" : "s"} remaining`;
  const banner =
    vm.status === "revising"
      ? '<div class="banner" data-state="revising">Revising workflow…</div>'
      : vm.status === "approved"
        ? '<div class="banner" data-state="approved">Session approved — read-only</div>'
        : "";
  const prompts = vm.promptTemplates
    .map((t) => `<section class="prompt"><h4>${escapeHtml(t.name)}</h4><pre>${escapeHtml(t.text)}</pre></section>`)
    .join("");
  const samples = vm.sampleCards
    .map((card) => `<article class="sample-card" data-index="${card.index}"><pre>${escapeHtml(card.body)}</pre></article>`)
    .join("");
  const history = vm.priorFeedback
    .map((f) => `<li data-round="${f.round}">${escapeHtml(f.text)}</li>`)
    .join("");
  const disabled = vm.inputsEnabled ? "" : " disabled";
  return `
<div class="review" data-status="${vm.status}" data-round="${vm.round}">
  ${banner}
  <header><h2>${escapeHtml(vm.task)}</h2><span class="rounds-counter">${counter}</span></header>
  <div class="workflow">
    ${prompts}
    <section class="script"><h4>script</h4><pre>${escapeHtml(vm.script)}</pre></section>
  </div>
  <div class="samples">${samples}</div>
  <ol class="feedback-history">${history}</ol>
  <form class="feedback-form">
    <textarea name="feedback"${disabled}></textarea>
    <button type="submit" name="submit"${disabled}>Submit feedback</button>
    <button type="button" name="approve"${vm.status === "approved" ? " disabled" : ""}>Approve</button>
  </form>
</div>`;
}
