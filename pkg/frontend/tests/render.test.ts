/** Markup details: escaping, disabled states, mode labels, lane styling. */

import { describe, expect, test } from "vitest";

import { escapeHtml, renderControls, renderEntry, renderStatusBar } from "../src/render.js";
import { entryFromRecord, TimelineStore } from "../src/timeline.js";
import type { SessionStatus, StepRecord } from "../src/wire.js";
import { engineFrames, fixture } from "./helpers.js";

function sampleRecord(): StepRecord {
  const [frame] = engineFrames(fixture.timeline.slice(0, 1));
  if (frame?.kind !== "record") throw new Error("expected a record");
  return JSON.parse(JSON.stringify(frame.body)) as StepRecord;
}

function sampleStatus(): SessionStatus {
  const frame = engineFrames(fixture.timeline.slice(6, 7))[0];
  if (frame?.kind !== "status") throw new Error("expected a status");
  return JSON.parse(JSON.stringify(frame.body)) as SessionStatus;
}

function storeWith(status: SessionStatus): TimelineStore {
  const store = new TimelineStore();
  store.status = status;
  return store;
}

describe("entries", () => {
  test("operator-visible text is escaped", () => {
    const record = sampleRecord();
    if (!record.response) throw new Error("fixture record has a response");
    record.response.summary = '<img src=x onerror="boom">';
    const html = renderEntry(entryFromRecord(record));
    expect(html).not.toContain("<img");
    expect(html).toContain("&lt;img src=x onerror=&quot;boom&quot;&gt;");
  });

  test("live entries offer rollback, archived entries do not", () => {
    const entry = entryFromRecord(sampleRecord());
    expect(renderEntry(entry)).toContain('data-step="0"');
    expect(renderEntry({ ...entry, archived: true })).not.toContain("rollback");
  });

  test("the payload inspector hides the state blob", () => {
    const html = renderEntry(entryFromRecord(sampleRecord()));
    expect(html).toContain("<details");
    expect(html).not.toContain("state_blob");
    expect(html).toContain("sub_tasks");
  });

  test("escapeHtml covers the five metacharacters", () => {
    expect(escapeHtml(`&<>"'`)).toBe("&amp;&lt;&gt;&quot;&#39;");
  });
});

describe("controls", () => {
  test("a pending command disables the step controls", () => {
    const html = renderControls(storeWith(sampleStatus()), "resume", "open");
    expect(html).toContain("waiting on resume");
    expect(html).toContain('data-cmd="resume" disabled');
  });

  test("active mode labels resume as next step", () => {
    const status = sampleStatus();
    expect(status.mode).toBe("active");
    expect(renderControls(storeWith(status), null, "open")).toContain(">next step<");
    const passive = { ...status, mode: "passive" };
    expect(renderControls(storeWith(passive), null, "open")).toContain(">resume<");
  });

  test("a lost connection disables everything", () => {
    const html = renderControls(storeWith(sampleStatus()), null, "lost");
    expect(html).toContain('data-cmd="resume" disabled');
    expect(html).toContain('data-cmd="abort" disabled');
  });

  test("a finished session offers no further commands", () => {
    const status = sampleStatus();
    status.phase = { ...status.phase, kind: "done", answer: "all set" };
    const html = renderControls(storeWith(status), null, "open");
    expect(html).toContain('data-cmd="resume" disabled');
    expect(html).toContain('data-cmd="abort" disabled');
  });

  test("the reviewer is not offered as a switch target", () => {
    const html = renderControls(storeWith(sampleStatus()), null, "open");
    expect(html).not.toContain('value="reviewer"');
    expect(html).toContain('value="planner"');
    expect(html).toContain('value="task_scheduler"');
  });
});

describe("status bar", () => {
  test("shows phase, steps and record counts", () => {
    const html = renderStatusBar(storeWith(sampleStatus()), "open");
    expect(html).toContain("deciding");
    expect(html).toContain("steps 4/20");
    expect(html).toContain("records 6");
  });

  test("renders a placeholder before the first status frame", () => {
    expect(renderStatusBar(new TimelineStore(), "connecting")).toContain("no session data yet");
  });
});
