/**
 * Client replica state machine, transport-agnostic: the connection layer
 * feeds decoded envelopes plus the current time and sends whatever envelopes
 * come back. The replica advances only on server-ordered updates (echo-apply,
 * no optimistic application), so every synced client shows the same bytes.
 *
 * A browser renders the session frame directly instead of tracking a headset
 * through physical space, so its local frame IS the session frame: when this
 * client defines the session anchor it uploads the default set, and when it
 * receives one it aligns with the identity transform.
 */

import { applyOp, SequenceGapError } from "./state.js";
import {
  ANCHOR_INFO,
  ANCHOR_UPLOAD,
  AnchorPointW,
  ERR_SESSION_FULL,
  ERR_VERSION_MISMATCH,
  ERROR,
  EnvelopeW,
  FULL_STATE,
  HEARTBEAT,
  JOIN_REQUEST,
  OpW,
  PROTOCOL_VERSION,
  ROLE_PARTICIPANT,
  SUBMIT_OP,
  SessionStateW,
  UPDATE,
  WELCOME,
  stateDigest,
} from "./wire.js";

// Phases.
export const DISCOVERING = "discovering";
export const CONNECTING = "connecting";
export const AWAITING_WELCOME = "awaiting_welcome";
export const ANCHOR_DEFINING = "anchor_defining";
export const ALIGNING = "aligning";
export const SYNCED = "synced";
export const RECONNECTING = "reconnecting";

// Input modes.
export const GAZE_TAP = "gaze_tap";
export const RAY_POINTER = "ray_pointer";

// Pointer event sources.
export const HAND_VISIBLE = "hand_visible";
export const HAND_HIDDEN = "hand_hidden";
export const AIR_TAP = "air_tap";
export const CONTROLLER_BUTTON = "controller_button";
export const CONTROLLER_ORIENTATION = "controller_orientation";
export const POINTER_SOURCES = [
  HAND_VISIBLE,
  HAND_HIDDEN,
  AIR_TAP,
  CONTROLLER_BUTTON,
  CONTROLLER_ORIENTATION,
] as const;

export const HEARTBEAT_INTERVAL = 2.0; // seconds

/** Anchor points a frame definer measures off its local space: four corners
 * of the virtual table. Any non-collinear labeled set works. */
export const DEFAULT_ANCHOR: AnchorPointW[] = [
  { label: "a0", position: [0.0, 0.0, 0.0] },
  { label: "a1", position: [1.0, 0.0, 0.0] },
  { label: "a2", position: [0.0, 0.0, 1.0] },
  { label: "a3", position: [0.0, 1.0, 0.0] },
];

export class NotSyncedError extends Error {}

/** Hand in view -> gaze+tap; controller activity -> ray pointer. Pure in
 * (mode, source): hand visibility is itself an event, so no hidden state. */
export function arbitrateInput(mode: string, source: string): string {
  if (source === HAND_VISIBLE) return GAZE_TAP;
  if (source === CONTROLLER_BUTTON || source === CONTROLLER_ORIENTATION) return RAY_POINTER;
  return mode;
}

export interface ErrorInfo {
  code: string;
  detail: string;
}

export interface LocalPrefs {
  language: string;
  inputMode: string;
}

export interface ClientOptions {
  role?: string;
  language?: string;
  heartbeatInterval?: number;
}

export class ClientCore {
  readonly role: string;
  phase: string = DISCOVERING;
  connected = false;
  clientId: string | null = null;
  sessionId: string | null = null;
  replica: SessionStateW | null = null;
  aligned = false;
  sessionAnchor: AnchorPointW[] | null = null;
  localPrefs: LocalPrefs;
  lastError: ErrorInfo | null = null;
  rejected = false; // session full / version mismatch: do not redial
  heartbeatInterval: number;

  private nextOpId = 1;
  private acks = new Map<number, number>();
  private resyncRequested = false;
  private lastHeartbeat = 0;

  constructor(options: ClientOptions = {}) {
    this.role = options.role ?? ROLE_PARTICIPANT;
    this.localPrefs = { language: options.language ?? "en", inputMode: GAZE_TAP };
    this.heartbeatInterval = options.heartbeatInterval ?? HEARTBEAT_INTERVAL;
  }

  // -- lifecycle ------------------------------------------------------------

  beginConnect(): void {
    this.phase = CONNECTING;
  }

  onConnected(now: number): EnvelopeW[] {
    this.connected = true;
    this.phase = AWAITING_WELCOME;
    this.clientId = null;
    this.aligned = false;
    this.sessionAnchor = null;
    this.resyncRequested = false;
    this.lastHeartbeat = now;
    return [
      {
        kind: JOIN_REQUEST,
        sender: "new",
        payload: { role: this.role, version: PROTOCOL_VERSION },
      },
    ];
  }

  onDisconnected(): EnvelopeW[] {
    this.connected = false;
    this.phase = RECONNECTING;
    this.resyncRequested = false;
    // The replica is kept as a stale view; a rejoin replaces it wholesale.
    return [];
  }

  onMessage(env: EnvelopeW, _now: number): EnvelopeW[] {
    switch (env.kind) {
      case UPDATE:
        return this.handleUpdate(env);
      case FULL_STATE: {
        if (env.payload === null || env.payload === undefined) return [];
        const state = (env.payload as { state: SessionStateW }).state;
        this.replica = state;
        this.resyncRequested = false;
        if (this.aligned) this.phase = SYNCED;
        return [];
      }
      case ANCHOR_INFO: {
        const payload = env.payload as { anchor: AnchorPointW[] };
        this.sessionAnchor = payload.anchor;
        // Desktop rendering happens in session coordinates, so the local
        // measurement of each anchor equals its session position and the
        // alignment solve degenerates to the identity (zero residual).
        this.aligned = true;
        return [];
      }
      case WELCOME:
        return this.handleWelcome(
          env.payload as { client_id: string; session_id: string; anchor_needed: boolean },
        );
      case ERROR: {
        const payload = env.payload as ErrorInfo;
        this.lastError = payload;
        if (payload.code === ERR_SESSION_FULL || payload.code === ERR_VERSION_MISMATCH) {
          this.rejected = true;
        }
        return [];
      }
      default:
        return []; // heartbeat and anything else informational
    }
  }

  private handleWelcome(w: {
    client_id: string;
    session_id: string;
    anchor_needed: boolean;
  }): EnvelopeW[] {
    this.clientId = w.client_id;
    this.sessionId = w.session_id;
    if (w.anchor_needed) {
      // This client defines the session frame.
      this.phase = ANCHOR_DEFINING;
      this.aligned = true;
      return [
        {
          kind: ANCHOR_UPLOAD,
          sender: this.clientId,
          payload: { anchor: DEFAULT_ANCHOR },
        },
      ];
    }
    this.phase = ALIGNING;
    return [];
  }

  private handleUpdate(env: EnvelopeW): EnvelopeW[] {
    if (this.replica === null) {
      return []; // joined mid-broadcast; the coming full_state covers this
    }
    const seq = env.seq;
    const payload = env.payload as { op: OpW; origin: string; op_id: number };
    if (typeof seq !== "number") return [];
    if (seq <= this.replica.server_seq) {
      return []; // duplicate of something the full_state already included
    }
    if (seq === this.replica.server_seq + 1) {
      try {
        this.replica = applyOp(this.replica, seq, payload.op, payload.origin);
      } catch (e) {
        if (e instanceof SequenceGapError) return [];
        throw e;
      }
      if (payload.origin === this.clientId && payload.op_id) {
        this.acks.set(payload.op_id, seq);
      }
      return [];
    }
    // Gap: some update was lost. Ask for a full snapshot once and hold
    // further application until it arrives.
    if (this.resyncRequested) return [];
    this.resyncRequested = true;
    this.phase = RECONNECTING;
    return [{ kind: FULL_STATE, sender: this.clientId ?? "new", payload: null }];
  }

  // -- submissions ------------------------------------------------------------

  /** Send an op for ordering; the replica changes only on the echo. */
  submit(op: OpW): { opId: number; out: EnvelopeW[] } {
    if (this.phase !== SYNCED) {
      throw new NotSyncedError(`cannot submit in phase ${this.phase}`);
    }
    const opId = this.nextOpId++;
    return {
      opId,
      out: [
        {
          kind: SUBMIT_OP,
          sender: this.clientId!,
          payload: { op, op_id: opId },
        },
      ],
    };
  }

  ackOf(opId: number): number | undefined {
    return this.acks.get(opId);
  }

  digest(): string | null {
    return this.replica === null ? null : stateDigest(this.replica);
  }

  // -- timers -------------------------------------------------------------------

  tick(now: number): EnvelopeW[] {
    if (!this.connected) return [];
    if (now - this.lastHeartbeat >= this.heartbeatInterval) {
      this.lastHeartbeat = now;
      return [{ kind: HEARTBEAT, sender: this.clientId ?? "new", payload: null }];
    }
    return [];
  }

  // -- local-only state -----------------------------------------------------------

  /** Language is a per-client setting; changing it emits nothing. */
  setLanguage(lang: string): void {
    this.localPrefs.language = lang;
  }

  onPointer(source: string): void {
    this.localPrefs.inputMode = arbitrateInput(this.localPrefs.inputMode, source);
  }
}
