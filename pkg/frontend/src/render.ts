/**
 * Pure HTML renderers. Each takes store state and returns a string; the
 * browser entry point owns the DOM, and tests assert on the markup
 * directly without one.
 */

import type { ConnectionState } from "./connection.js";
import type { TimelineEntry, TimelineStore } from "./timeline.js";
import type { CommandKind } from "./wire.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

function roleLabel(role: string): string {
  return role.replace(/_/g, " ");
}

// The blob restores engine state on rollback; it is not operator-readable,
// so the inspector shows everything else.
function inspectable(entry: TimelineEntry): string {
  const { state_blob: _blob, ...rest } = entry.record;
  return JSON.stringify(rest, null, 2);
}

export function renderEntry(entry: TimelineEntry, openPayloads?: ReadonlySet<number>): string {
  const classes = entry.archived ? "entry archived" : "entry";
  const branchClass = `badge branch b-${entry.branch.toLowerCase() || "none"}`;
  const open = openPayloads?.has(entry.index) ? " open" : "";
  const guided = entry.guidance
    ? `<span class="guided" title="${escapeHtml(entry.guidance)}">guided</span>`
    : "";
  const rollback = entry.archived
    ? ""
    : `<button class="rollback" data-step="${entry.index}">roll back here</button>`;
  return [
    `<li class="${classes}" data-index="${entry.index}">`,
    `<span class="step">#${entry.index}</span>`,
    `<span class="badge role">${escapeHtml(roleLabel(entry.role))}</span>`,
    `<span class="${branchClass}">${escapeHtml(entry.branch || "no response")}</span>`,
    guided,
    `<p class="summary">${escapeHtml(entry.summary)}</p>`,
    `<details class="payload"${open}><summary>payload</summary>`,
    `<pre>${escapeHtml(inspectable(entry))}</pre></details>`,
    rollback,
    `</li>`,
  ].join("");
}

export function renderTimeline(store: TimelineStore, openPayloads?: ReadonlySet<number>): string {
  const live = store.live.map((entry) => renderEntry(entry, openPayloads)).join("");
  const parts = [`<ol class="lane live" aria-label="live timeline">${live}</ol>`];
  if (store.archived.length > 0) {
    const archived = store.archived.map((entry) => renderEntry(entry)).join("");
    parts.push(
      `<section class="archive" aria-label="archived branches">` +
        `<h3>archived branches</h3><ol class="lane archived">${archived}</ol></section>`,
    );
  }
  return parts.join("");
}

export function renderStatusBar(store: TimelineStore, state: ConnectionState): string {
  const status = store.status;
  if (!status) return `<header class="statusbar"><span class="chip">no session data yet</span></header>`;
  const phase = status.phase;
  const phaseText = phase.role ? `${phase.kind}: ${roleLabel(phase.role)}` : phase.kind;
  const chips = [
    `<span class="chip id">${escapeHtml(status.id)}</span>`,
    `<span class="chip mode">${escapeHtml(status.mode)}</span>`,
    `<span class="chip phase p-${escapeHtml(phase.kind)}">${escapeHtml(phaseText)}</span>`,
    `<span class="chip steps">steps ${status.steps_used}/${status.budget}</span>`,
    `<span class="chip">records ${status.records}</span>`,
  ];
  if (status.archived > 0) chips.push(`<span class="chip">archived ${status.archived}</span>`);
  if (status.fault) chips.push(`<span class="chip fault">fault: ${escapeHtml(status.fault)}</span>`);
  chips.push(`<span class="chip link l-${state}">${state}</span>`);
  return `<header class="statusbar">${chips.join("")}</header>`;
}

export function renderBanners(store: TimelineStore, state: ConnectionState): string {
  const banners: string[] = [];
  if (state === "lost") {
    banners.push(`<div class="banner connection">connection lost, retrying</div>`);
  } else if (state === "connecting") {
    banners.push(`<div class="banner connection">connecting</div>`);
  }
  const status = store.status;
  if (status?.awaiting_human) {
    banners.push(
      `<div class="banner needs-help">the agent needs help: review the last step, then guide or resume</div>`,
    );
  }
  if (status?.fault) {
    banners.push(`<div class="banner fault">${escapeHtml(status.fault)}</div>`);
  }
  if (status?.phase.kind === "done") {
    banners.push(`<div class="banner done">${escapeHtml(status.phase.answer)}</div>`);
  } else if (status?.phase.kind === "halted") {
    banners.push(`<div class="banner halted">halted: ${escapeHtml(status.phase.reason)}</div>`);
  }
  return banners.join("");
}

// Roles the engine lets an operator hand the turn to. The reviewer reacts
// to operations and cannot lead, so it is not offered.
const SWITCH_TARGETS = [
  "planner",
  "task_scheduler",
  "searcher",
  "application_manager",
  "file_manager",
  "programmer",
];

export function renderControls(store: TimelineStore, pending: CommandKind | null, state: ConnectionState): string {
  const status = store.status;
  const terminal = status?.phase.kind === "done";
  const blocked = pending !== null || state !== "open" || terminal;
  const disabled = blocked ? " disabled" : "";
  const resumeLabel = status?.mode === "active" ? "next step" : "resume";
  const options = SWITCH_TARGETS.map(
    (role) => `<option value="${role}">${roleLabel(role)}</option>`,
  ).join("");
  return [
    `<div class="controls">`,
    `<button data-cmd="resume"${disabled}>${resumeLabel}</button>`,
    `<form data-cmd="guide"><textarea name="text" placeholder="guidance for the next turn"></textarea>`,
    `<button type="submit"${disabled}>guide</button></form>`,
    `<span class="switch"><select name="role">${options}</select>`,
    `<button data-cmd="switch"${disabled}>switch role</button></span>`,
    `<button data-cmd="abort"${terminal || state !== "open" ? " disabled" : ""}>abort</button>`,
    pending ? `<span class="pending">waiting on ${pending}</span>` : "",
    `</div>`,
  ].join("");
}

export function renderToast(toast: { tone: string; text: string }): string {
  return `<div class="toast ${toast.tone}">${escapeHtml(toast.text)}</div>`;
}
