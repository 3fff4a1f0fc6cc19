/**
 * The session socket's frame vocabulary.
 *
 * Everything here mirrors the engine's wire format exactly: frames are
 * `{v, kind, body}` envelopes, version 1. The engine sends record, rollback,
 * status, ack and rejected frames; the console sends only command frames.
 * Unknown payload keys pass through untouched so the inspector can show
 * whatever a role put in its response.
 */

import { z } from "zod";

export const WIRE_VERSION = 1;

const phaseSchema = z.object({
  kind: z.string(),
  role: z.string(),
  assignment_index: z.int(),
  reason: z.string(),
  answer: z.string(),
});

// Role payloads vary (plans carry sub_tasks, operations carry an action);
// the envelope fields below are the only ones every response shares.
const responseSchema = z.looseObject({
  role: z.string(),
  branch: z.string(),
  problem: z.string(),
  message: z.string(),
  summary: z.string(),
});

const invocationSchema = z.object({
  action: z.string(),
  args: z.record(z.string(), z.unknown()),
});

const recordSchema = z.object({
  index: z.int().nonnegative(),
  phase: phaseSchema,
  acting_role: z.string(),
  response: responseSchema.nullable(),
  invocation: invocationSchema.nullable(),
  result: z.string().nullable(),
  review: responseSchema.nullable(),
  env_before_hash: z.string(),
  env_after_hash: z.string(),
  guidance: z.string(),
  t: z.int(),
  state_blob: z.string(),
});

const statusSchema = z.object({
  id: z.string(),
  request: z.string(),
  mode: z.string(),
  budget: z.int(),
  phase: phaseSchema,
  steps_used: z.int(),
  awaiting_human: z.boolean(),
  started: z.boolean(),
  records: z.int().nonnegative(),
  archived: z.int().nonnegative(),
  fault: z.string().nullable(),
});

const frameSchema = z.discriminatedUnion("kind", [
  z.object({ v: z.literal(WIRE_VERSION), kind: z.literal("record"), body: recordSchema }),
  z.object({
    v: z.literal(WIRE_VERSION),
    kind: z.literal("rollback"),
    body: z.object({ to_step: z.int().nonnegative() }),
  }),
  z.object({ v: z.literal(WIRE_VERSION), kind: z.literal("status"), body: statusSchema }),
  z.object({
    v: z.literal(WIRE_VERSION),
    kind: z.literal("ack"),
    body: z.object({ command: z.string() }),
  }),
  z.object({
    v: z.literal(WIRE_VERSION),
    kind: z.literal("rejected"),
    body: z.object({ reason: z.string(), command: z.string().optional() }),
  }),
]);

export type Phase = z.infer<typeof phaseSchema>;
export type AgentResponse = z.infer<typeof responseSchema>;
export type StepRecord = z.infer<typeof recordSchema>;
export type SessionStatus = z.infer<typeof statusSchema>;
export type EngineFrame = z.infer<typeof frameSchema>;

const FRAME_KINDS = new Set(["record", "rollback", "status", "ack", "rejected"]);

export type DecodeOutcome =
  | { ok: true; frame: EngineFrame }
  | { ok: false; error: string };

/** Validate one inbound frame; never throws. */
export function decodeFrame(data: unknown): DecodeOutcome {
  if (typeof data !== "object" || data === null || Array.isArray(data)) {
    return { ok: false, error: "frame must be a JSON object" };
  }
  const envelope = data as Record<string, unknown>;
  if (envelope["v"] !== WIRE_VERSION) {
    return { ok: false, error: `unsupported wire version ${JSON.stringify(envelope["v"])}` };
  }
  if (!FRAME_KINDS.has(envelope["kind"] as string)) {
    return { ok: false, error: `unknown frame kind ${JSON.stringify(envelope["kind"])}` };
  }
  const result = frameSchema.safeParse(data);
  if (!result.success) {
    const issue = result.error.issues[0];
    const path = issue?.path.join(".") ?? "";
    return { ok: false, error: `bad ${envelope["kind"]} frame at ${path}: ${issue?.message}` };
  }
  return { ok: true, frame: result.data };
}

export type CommandKind = "resume" | "guide" | "switch_role" | "rollback" | "abort";

export interface CommandBody {
  kind: CommandKind;
  text: string;
  role: string;
  step: number;
}

export interface CommandFrame {
  v: typeof WIRE_VERSION;
  kind: "command";
  body: CommandBody;
}

/**
 * Build one outbound command frame.
 *
 * The engine fills absent fields with "" / "" / -1; sending all four keys
 * keeps the traffic identical on both ends of the socket.
 */
export function commandFrame(
  kind: CommandKind,
  fields: Partial<Omit<CommandBody, "kind">> = {},
): CommandFrame {
  return {
    v: WIRE_VERSION,
    kind: "command",
    body: { kind, text: "", role: "", step: -1, ...fields },
  };
}
