/**
 * One WebSocket to one session: decode inbound frames into the store,
 * send operator commands, survive drops.
 *
 * The socket type is structural so tests can drive the console with a
 * scripted fake; the browser entry point adapts the native WebSocket.
 */

import { TimelineStore } from "./timeline.js";
import {
  commandFrame,
  decodeFrame,
  type CommandBody,
  type CommandKind,
  type EngineFrame,
} from "./wire.js";

export interface WireSocket {
  send(text: string): void;
  close(): void;
  onopen: (() => void) | null;
  onmessage: ((text: string) => void) | null;
  onclose: (() => void) | null;
}

export type SocketFactory = (url: string) => WireSocket;

export type ConnectionState = "connecting" | "open" | "lost";

export interface Toast {
  tone: "error" | "info";
  text: string;
}

export interface ConsoleEvents {
  /** Fired after the store has applied the frame. */
  onFrame?: (frame: EngineFrame) => void;
  onToast?: (toast: Toast) => void;
  onConnection?: (state: ConnectionState) => void;
}

export interface SendResult {
  sent: boolean;
  reason?: string;
}

export class ConsoleConnection {
  /** Command awaiting its ack; step controls stay disabled while set. */
  pending: CommandKind | null = null;
  state: ConnectionState = "connecting";

  private socket: WireSocket | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private stopped = false;

  constructor(
    private readonly url: string,
    readonly store: TimelineStore,
    private readonly factory: SocketFactory,
    private readonly events: ConsoleEvents = {},
    private readonly retryDelayMs = 1000,
  ) {}

  connect(): void {
    if (this.socket || this.stopped) return; // one socket per session
    this.setState("connecting");
    const socket = this.factory(this.url);
    this.socket = socket;
    socket.onopen = () => this.setState("open");
    socket.onmessage = (text) => this.receive(text);
    socket.onclose = () => this.handleClose(socket);
  }

  /** Deliberate shutdown; no reconnect afterwards. */
  close(): void {
    this.stopped = true;
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = null;
    this.socket?.close();
    this.socket = null;
  }

  private setState(state: ConnectionState): void {
    this.state = state;
    this.events.onConnection?.(state);
  }

  private handleClose(socket: WireSocket): void {
    if (this.socket !== socket) return; // stale close from a replaced socket
    this.socket = null;
    this.pending = null; // any in-flight ack died with the socket
    if (this.stopped) return;
    this.setState("lost");
    this.timer = setTimeout(() => {
      this.timer = null;
      this.connect();
    }, this.retryDelayMs);
  }

  private receive(text: string): void {
    let data: unknown;
    try {
      data = JSON.parse(text);
    } catch {
      this.events.onToast?.({ tone: "error", text: "dropped a frame that was not JSON" });
      return;
    }
    const outcome = decodeFrame(data);
    if (!outcome.ok) {
      this.events.onToast?.({ tone: "error", text: outcome.error });
      return;
    }
    const frame = outcome.frame;
    // Any inbound frame unblocks the controls: the ack is the usual
    // release, but a record or status proves the engine moved on too.
    this.pending = null;
    if (frame.kind === "rejected") {
      this.events.onToast?.({ tone: "error", text: frame.body.reason });
    } else {
      this.store.apply(frame);
    }
    this.events.onFrame?.(frame);
  }

  // -- operator commands, one method per control ---------------------------

  resume(): SendResult {
    return this.submit("resume");
  }

  guide(text: string): SendResult {
    if (!text.trim()) return this.refuse("guidance is empty, nothing sent");
    return this.submit("guide", { text });
  }

  switchRole(role: string): SendResult {
    if (!role.trim()) return this.refuse("pick a role first");
    return this.submit("switch_role", { role });
  }

  rollback(step: number): SendResult {
    if (!Number.isInteger(step) || step < 0) {
      return this.refuse("rollback needs a step index");
    }
    return this.submit("rollback", { step });
  }

  abort(): SendResult {
    return this.submit("abort");
  }

  private submit(kind: CommandKind, fields: Partial<Omit<CommandBody, "kind">> = {}): SendResult {
    if (!this.socket || this.state !== "open") {
      return this.refuse("not connected");
    }
    if (this.pending) {
      return this.refuse(`still waiting on ${this.pending}`);
    }
    this.socket.send(JSON.stringify(commandFrame(kind, fields)));
    this.pending = kind;
    return { sent: true };
  }

  private refuse(reason: string): SendResult {
    this.events.onToast?.({ tone: "error", text: reason });
    return { sent: false, reason };
  }
}
