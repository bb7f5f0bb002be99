/**
 * WebSocket transport: one JSON envelope per message (the socket's own
 * framing replaces the TCP length prefix). Drives the ClientCore, sends its
 * heartbeats, and redials automatically unless the server rejected us.
 */

import { ClientCore } from "./client.js";
import type { EnvelopeW } from "./wire.js";

const RECONNECT_DELAY_MS = 1000;
const TICK_MS = 500;

export interface ConnectionTarget {
  /** host[:port] of the session server's WebSocket listener. */
  host: string;
  secure: boolean;
}

export function wsUrl(target: ConnectionTarget): string {
  return `${target.secure ? "wss" : "ws"}://${target.host}/ws`;
}

export function httpBase(target: ConnectionTarget): string {
  return `${target.secure ? "https" : "http"}://${target.host}`;
}

export class Connection {
  private ws: WebSocket | null = null;
  private reconnectTimer: ReturnType<typeof setTimeout> | null = null;
  private tickTimer: ReturnType<typeof setInterval> | null = null;
  private closed = false;

  constructor(
    readonly target: ConnectionTarget,
    readonly core: ClientCore,
    private readonly onChange: () => void,
  ) {}

  start(): void {
    this.closed = false;
    this.dial();
    this.tickTimer = setInterval(() => {
      this.sendAll(this.core.tick(nowSeconds()));
    }, TICK_MS);
  }

  stop(): void {
    this.closed = true;
    if (this.tickTimer !== null) clearInterval(this.tickTimer);
    if (this.reconnectTimer !== null) clearTimeout(this.reconnectTimer);
    this.ws?.close();
    this.ws = null;
  }

  submit(op: Parameters<ClientCore["submit"]>[0]): number {
    const { opId, out } = this.core.submit(op);
    this.sendAll(out);
    this.onChange();
    return opId;
  }

  sendAll(envelopes: EnvelopeW[]): void {
    for (const env of envelopes) {
      if (this.ws && this.ws.readyState === WebSocket.OPEN) {
        this.ws.send(JSON.stringify(env));
      }
    }
  }

  private dial(): void {
    this.core.beginConnect();
    this.onChange();
    const ws = new WebSocket(wsUrl(this.target));
    this.ws = ws;

    ws.onopen = () => {
      this.sendAll(this.core.onConnected(nowSeconds()));
      this.onChange();
    };

    ws.onmessage = (event: MessageEvent) => {
      let env: EnvelopeW;
      try {
        env = JSON.parse(String(event.data)) as EnvelopeW;
      } catch {
        return; // not an envelope; ignore
      }
      this.sendAll(this.core.onMessage(env, nowSeconds()));
      this.onChange();
    };

    ws.onclose = () => {
      if (this.ws !== ws) return;
      this.ws = null;
      this.core.onDisconnected();
      this.onChange();
      // Session-full and version rejections are final; anything else retries.
      if (!this.closed && !this.core.rejected) {
        this.reconnectTimer = setTimeout(() => this.dial(), RECONNECT_DELAY_MS);
      }
    };
  }
}

export function nowSeconds(): number {
  return (typeof performance !== "undefined" ? performance.now() : Date.now()) / 1000;
}

/** Resolve the session host from ?server=, defaulting to the page's own
 * host (the server serves /ui itself, so same-origin is the common case). */
export function resolveTarget(params: URLSearchParams, location: Location): ConnectionTarget {
  const server = params.get("server");
  if (server !== null && server !== "") {
    return { host: server, secure: location.protocol === "https:" };
  }
  return { host: location.host, secure: location.protocol === "https:" };
}
