// WebSocket client with reconnect backoff and a once-only pending queue.
// The socket factory is injectable so tests can drive a fake socket.

import { parseServerMessage, ServerMessage } from './protocol.js';
import { ConsoleState } from './state.js';

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ClientOptions {
  socketFactory?: SocketFactory;
  backoffMs?: number;
  maxBackoffMs?: number;
  onMessage?: (msg: ServerMessage) => void;
}

const defaultFactory: SocketFactory = (url) =>
  new WebSocket(url) as unknown as SocketLike;

export class ConsoleClient {
  readonly url: string;
  readonly state: ConsoleState;
  private readonly factory: SocketFactory;
  private readonly backoffMs: number;
  private readonly maxBackoffMs: number;
  private readonly onMessage?: (msg: ServerMessage) => void;
  private socket: SocketLike | null = null;
  private open = false;
  private closed = false;
  private retryDelay: number;
  private pending: string[] = [];

  constructor(url: string, state: ConsoleState, options: ClientOptions = {}) {
    this.url = url;
    this.state = state;
    this.factory = options.socketFactory ?? defaultFactory;
    this.backoffMs = options.backoffMs ?? 500;
    this.maxBackoffMs = options.maxBackoffMs ?? 5000;
    this.onMessage = options.onMessage;
    this.retryDelay = this.backoffMs;
  }

  connect(): void {
    if (this.closed) return;
    this.state.status = 'connecting';
    const socket = this.factory(this.url);
    this.socket = socket;
    socket.onopen = () => {
      this.open = true;
      this.retryDelay = this.backoffMs;
      this.state.status = 'connected';
      this.flushPending();
    };
    socket.onmessage = (ev) => this.handleMessage(ev.data);
    socket.onerror = () => {
      // the close handler owns reconnection
    };
    socket.onclose = () => {
      this.open = false;
      this.socket = null;
      if (this.closed) return;
      this.state.status = 'disconnected';
      setTimeout(() => this.connect(), this.retryDelay);
      this.retryDelay = Math.min(this.retryDelay * 2, this.maxBackoffMs);
    };
  }

  /** Queue or send one serialized command; each command goes out once. */
  send(payload: string): void {
    if (this.open && this.socket) {
      this.socket.send(payload);
    } else {
      this.pending.push(payload);
    }
  }

  close(): void {
    this.closed = true;
    this.state.status = 'disconnected';
    if (this.socket) this.socket.close();
    this.socket = null;
    this.open = false;
  }

  private flushPending(): void {
    const queued = this.pending;
    this.pending = [];
    for (const payload of queued) {
      this.socket?.send(payload);
    }
  }

  private handleMessage(raw: string): void {
    const msg = parseServerMessage(raw);
    if (msg === null) return;
    if (msg.type === 'frame') {
      this.state.pushFrame(msg);
    } else {
      this.state.recordError(msg.error);
    }
    this.onMessage?.(msg);
  }
}
