/** Operator commands: exact frames out, pending discipline, rejections. */

import { describe, expect, test } from "vitest";

import { commandFrame } from "../src/wire.js";
import { fixture, opened, parsedSent } from "./helpers.js";

const ackFor = (command: string) =>
  fixture.commands.received.find(
    (data) =>
      (data as { kind: string; body: { command?: string } }).kind === "ack" &&
      (data as { body: { command?: string } }).body.command === command,
  );

const rejectionFor = (command: string) =>
  fixture.commands.received.find(
    (data) =>
      (data as { kind: string; body: { command?: string } }).kind === "rejected" &&
      (data as { body: { command?: string } }).body.command === command,
  );

describe("sending", () => {
  test("resume sends the exact wire frame and blocks until the ack", () => {
    const rig = opened();
    expect(rig.connection.resume()).toEqual({ sent: true });
    expect(parsedSent(rig.socket())).toEqual([commandFrame("resume")]);
    expect(rig.connection.pending).toBe("resume");

    const again = rig.connection.resume();
    expect(again.sent).toBe(false);
    expect(rig.socket().sent).toHaveLength(1);

    rig.socket().deliver(ackFor("resume"));
    expect(rig.connection.pending).toBeNull();
    expect(rig.connection.resume().sent).toBe(true);
  });

  test("a rollback click on entry 3 sends rollback(3)", () => {
    const rig = opened();
    expect(rig.connection.rollback(3).sent).toBe(true);
    expect(parsedSent(rig.socket())).toEqual([
      { v: 1, kind: "command", body: { kind: "rollback", text: "", role: "", step: 3 } },
    ]);
  });

  test("commands refuse to flow before the socket opens", () => {
    const rig = opened();
    rig.connection.close();
    const result = rig.connection.resume();
    expect(result).toEqual({ sent: false, reason: "not connected" });
  });
});

describe("client-side validation", () => {
  test("empty guidance never reaches the socket", () => {
    const rig = opened();
    for (const text of ["", "   ", "\n\t"]) {
      const result = rig.connection.guide(text);
      expect(result.sent).toBe(false);
      expect(result.reason).toBe("guidance is empty, nothing sent");
    }
    expect(rig.socket().sent).toHaveLength(0);
    expect(rig.toasts.map((toast) => toast.text)).toContain("guidance is empty, nothing sent");
  });

  test("rollback requires a usable step index", () => {
    const rig = opened();
    expect(rig.connection.rollback(-1).sent).toBe(false);
    expect(rig.connection.rollback(1.5).sent).toBe(false);
    expect(rig.socket().sent).toHaveLength(0);
  });

  test("switching needs a role", () => {
    const rig = opened();
    expect(rig.connection.switchRole("  ").sent).toBe(false);
    expect(rig.socket().sent).toHaveLength(0);
  });
});

describe("engine replies", () => {
  test("rejection reasons surface verbatim as toasts", () => {
    const rig = opened();
    expect(rig.connection.switchRole("reviewer").sent).toBe(true);
    rig.socket().deliver(rejectionFor("switch_role"));
    expect(rig.toasts.at(-1)?.text).toBe(
      "the reviewer reacts to operations; it cannot lead a turn",
    );
    expect(rig.connection.pending).toBeNull();
    // a rejection changes nothing in the timeline
    expect(rig.store.live).toHaveLength(0);
  });

  test("an out-of-range rollback is refused with the engine's words", () => {
    const rig = opened();
    expect(rig.connection.rollback(99).sent).toBe(true);
    rig.socket().deliver(rejectionFor("rollback"));
    expect(rig.toasts.at(-1)?.text).toBe("step 99 not in event log of length 1");
  });

  test("any inbound frame releases the controls", () => {
    const rig = opened();
    rig.connection.resume();
    expect(rig.connection.pending).toBe("resume");
    // no ack yet, but the engine moved: a record arrives
    rig.socket().deliver(fixture.timeline[0]);
    expect(rig.connection.pending).toBeNull();
  });
});
