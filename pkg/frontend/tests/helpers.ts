/**
 * Shared console test rig: the captured engine traffic, a scripted socket,
 * and a fully wired console ready to receive frames.
 *
 * `fixtures/engine_frames.json` is real traffic recorded from a session
 * driven by `scripts/capture_frames.py`; regenerate it there if the wire
 * format ever moves.
 */

import { ConsoleConnection, type ConnectionState, type Toast, type WireSocket } from "../src/connection.js";
import { TimelineStore } from "../src/timeline.js";
import { decodeFrame, type EngineFrame } from "../src/wire.js";
import raw from "./fixtures/engine_frames.json";

export interface Fixture {
  timeline: unknown[];
  reconnect: unknown[];
  commands: { sent: unknown[]; received: unknown[] };
  park: unknown[];
}

export const fixture = raw as unknown as Fixture;

/** Decode fixture data, failing loudly if the schema rejects it. */
export function engineFrames(list: unknown[]): EngineFrame[] {
  return list.map((data) => {
    const outcome = decodeFrame(data);
    if (!outcome.ok) throw new Error(outcome.error);
    return outcome.frame;
  });
}

export class FakeSocket implements WireSocket {
  sent: string[] = [];
  closed = false;
  onopen: (() => void) | null = null;
  onmessage: ((text: string) => void) | null = null;
  onclose: (() => void) | null = null;

  constructor(readonly url: string) {}

  send(text: string): void {
    this.sent.push(text);
  }

  close(): void {
    this.closed = true;
    this.onclose?.();
  }

  // test-side controls
  open(): void {
    this.onopen?.();
  }

  deliver(frame: unknown): void {
    this.onmessage?.(JSON.stringify(frame));
  }

  deliverRaw(text: string): void {
    this.onmessage?.(text);
  }

  drop(): void {
    this.onclose?.();
  }
}

export interface Console {
  connection: ConsoleConnection;
  store: TimelineStore;
  sockets: FakeSocket[];
  toasts: Toast[];
  states: ConnectionState[];
  frames: EngineFrame[];
  socket(): FakeSocket;
}

export function attach(retryDelayMs = 1000): Console {
  const sockets: FakeSocket[] = [];
  const store = new TimelineStore();
  const toasts: Toast[] = [];
  const states: ConnectionState[] = [];
  const frames: EngineFrame[] = [];
  const connection = new ConsoleConnection(
    "ws://engine/sessions/abc123/ws",
    store,
    (url) => {
      const socket = new FakeSocket(url);
      sockets.push(socket);
      return socket;
    },
    {
      onToast: (toast) => toasts.push(toast),
      onConnection: (state) => states.push(state),
      onFrame: (frame) => frames.push(frame),
    },
    retryDelayMs,
  );
  return {
    connection,
    store,
    sockets,
    toasts,
    states,
    frames,
    socket: () => {
      const last = sockets[sockets.length - 1];
      if (!last) throw new Error("no socket yet");
      return last;
    },
  };
}

/** Attach and complete the handshake so commands can flow. */
export function opened(retryDelayMs = 1000): Console {
  const rig = attach(retryDelayMs);
  rig.connection.connect();
  rig.socket().open();
  return rig;
}

export function deliverAll(rig: Console, list: unknown[]): void {
  for (const data of list) rig.socket().deliver(data);
}

export function parsedSent(socket: FakeSocket): unknown[] {
  return socket.sent.map((text) => JSON.parse(text));
}

/** data-index values in markup order, the rendered timeline's spine. */
export function indicesIn(html: string): number[] {
  return [...html.matchAll(/data-index="(\d+)"/g)].map((match) => Number(match[1]));
}
