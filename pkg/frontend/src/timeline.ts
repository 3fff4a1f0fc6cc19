/**
 * Fold over engine frames producing the two timeline lanes.
 *
 * The store holds nothing the engine cannot rebuild. The live lane mirrors
 * the event log, keyed by record index. The archived lane collects the
 * suffixes cut off by rollbacks this console has seen; the engine keeps
 * those records too, it just never re-sends them, so the lane is the
 * console's view of history rather than state of its own.
 */

import type { EngineFrame, SessionStatus, StepRecord } from "./wire.js";

export interface TimelineEntry {
  index: number;
  role: string;
  branch: string;
  summary: string;
  /** Non-empty when an operator note shaped this turn. */
  guidance: string;
  archived: boolean;
  record: StepRecord;
}

export function entryFromRecord(record: StepRecord): TimelineEntry {
  const response = record.response;
  return {
    index: record.index,
    role: record.acting_role,
    branch: response ? response.branch : "",
    summary: response ? response.summary || response.message : (record.result ?? ""),
    guidance: record.guidance,
    archived: false,
    record,
  };
}

export class TimelineStore {
  live: TimelineEntry[] = [];
  archived: TimelineEntry[] = [];
  status: SessionStatus | null = null;

  apply(frame: EngineFrame): void {
    if (frame.kind === "record") {
      this.applyRecord(frame.body);
    } else if (frame.kind === "rollback") {
      this.applyRollback(frame.body.to_step);
    } else if (frame.kind === "status") {
      this.applyStatus(frame.body);
    }
    // acks and rejections carry no timeline state
  }

  private applyRecord(record: StepRecord): void {
    const entry = entryFromRecord(record);
    // A reconnect backfill replays the log from zero. Dedup by index,
    // replacing in place, so no entry can ever appear twice.
    const at = this.live.findIndex((existing) => existing.index === entry.index);
    if (at >= 0) {
      this.live[at] = entry;
      return;
    }
    this.live.push(entry);
    this.live.sort((a, b) => a.index - b.index);
  }

  private applyRollback(toStep: number): void {
    const cut = this.live.filter((entry) => entry.index > toStep);
    this.live = this.live.filter((entry) => entry.index <= toStep);
    for (const entry of cut) {
      this.archived.push({ ...entry, archived: true });
    }
  }

  private applyStatus(status: SessionStatus): void {
    this.status = status;
    // A live lane longer than the engine's log means a rollback happened
    // while this console was away. Record indices are log positions, so
    // everything at or past the reported length belongs to the archive.
    if (this.live.length > status.records) {
      const cut = this.live.filter((entry) => entry.index >= status.records);
      this.live = this.live.filter((entry) => entry.index < status.records);
      for (const entry of cut) {
        this.archived.push({ ...entry, archived: true });
      }
    }
  }
}
