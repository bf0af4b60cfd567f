/** Server-authoritative wire client.
 *
 * The console never mutates session state locally: every visible state change
 * comes from a received state_snapshot. Frames are applied in seq order;
 * out-of-order frames are discarded with a warning.
 */

import {
  AnnotationDto,
  ProtocolError,
  Snapshot,
  TrackingSampleDto,
  WireMessage,
  makeClientMessage,
  parseServerMessage,
} from "./protocol";

/** Subset of the browser WebSocket API the client needs (ws implements it too). */
export interface WebSocketLike {
  send(data: string): void;
  close(): void;
  // eslint-disable-next-line @typescript-eslint/no-explicit-any
  onopen: ((ev: any) => void) | null;
  onclose: ((ev: any) => void) | null;
  onerror: ((ev: any) => void) | null;
  onmessage: ((ev: any) => void) | null;
}

export type WebSocketFactory = (url: string) => WebSocketLike;

export interface ClientHandlers {
  onSnapshot?: (snapshot: Snapshot, inReplyTo: number | null) => void;
  onSample?: (sample: TrackingSampleDto) => void;
  onAnnotation?: (annotation: AnnotationDto, inReplyTo: number | null) => void;
  onRejected?: (reason: string, command: string, inReplyTo: number | null) => void;
  onServerError?: (reason: string) => void;
  onProtocolError?: (reason: string) => void;
  onConnected?: (connected: boolean) => void;
  onWarning?: (message: string) => void;
}

export class NavClient {
  snapshot: Snapshot | null = null;
  connected = false;
  lastServerSeq = 0;

  private socket: WebSocketLike | null = null;
  private clientSeq = 0;
  private handlers: ClientHandlers;

  constructor(
    private makeSocket: WebSocketFactory,
    handlers: ClientHandlers = {},
  ) {
    this.handlers = handlers;
  }

  connect(url: string): void {
    const socket = this.makeSocket(url);
    this.socket = socket;
    socket.onopen = () => {
      this.connected = true;
      this.handlers.onConnected?.(true);
    };
    socket.onclose = () => {
      this.connected = false;
      this.handlers.onConnected?.(false);
    };
    socket.onerror = () => {
      this.handlers.onProtocolError?.("socket error");
    };
    socket.onmessage = (ev) => this.receive(String(ev.data));
  }

  close(): void {
    this.socket?.close();
  }

  /** Process one raw frame (exposed for tests). */
  receive(raw: string): void {
    let msg: WireMessage;
    try {
      msg = parseServerMessage(raw);
    } catch (e) {
      this.handlers.onProtocolError?.(e instanceof ProtocolError ? e.message : String(e));
      return;
    }
    if (msg.seq <= this.lastServerSeq) {
      this.handlers.onWarning?.(
        `discarding out-of-order frame seq ${msg.seq} (already at ${this.lastServerSeq})`,
      );
      return;
    }
    this.lastServerSeq = msg.seq;
    const replyTo = typeof msg.in_reply_to === "number" ? msg.in_reply_to : null;
    switch (msg.kind) {
      case "state_snapshot":
        this.snapshot = msg.payload as unknown as Snapshot;
        this.handlers.onSnapshot?.(this.snapshot, replyTo);
        break;
      case "tracking_sample":
        this.handlers.onSample?.(msg.payload as unknown as TrackingSampleDto);
        break;
      case "annotation_event": {
        // The echo is the authoritative confirmation; fold it into the local
        // view so the zone appears without waiting for the next snapshot.
        const annotation = msg.payload as unknown as AnnotationDto;
        if (this.snapshot && !this.snapshot.annotations.some((a) => a.id === annotation.id)) {
          this.snapshot.annotations.push(annotation);
        }
        this.handlers.onAnnotation?.(annotation, replyTo);
        break;
      }
      case "command_rejected": {
        const p = msg.payload as { reason?: string; command?: string };
        this.handlers.onRejected?.(p.reason ?? "rejected", p.command ?? "?", replyTo);
        break;
      }
      case "error": {
        const p = msg.payload as { reason?: string };
        this.handlers.onServerError?.(p.reason ?? "server error");
        break;
      }
      default:
        this.handlers.onWarning?.(`unknown message kind ${msg.kind}`);
    }
  }

  sendCommand(name: string, params: Record<string, unknown> = {}): number {
    return this.sendRaw("command", { name, params });
  }

  sendAnnotation(annotation: AnnotationDto): number {
    return this.sendRaw("annotation_event", annotation as unknown as Record<string, unknown>);
  }

  private sendRaw(kind: "command" | "annotation_event", payload: Record<string, unknown>): number {
    if (!this.socket) throw new Error("not connected");
    this.clientSeq += 1;
    this.socket.send(makeClientMessage(kind, payload, this.clientSeq));
    return this.clientSeq;
  }
}
