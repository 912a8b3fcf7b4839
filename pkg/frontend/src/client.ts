/** Solver connections: the live WebSocket client and a drag-rate throttle.
 *
 * The throttle keeps interactive drags at a bounded request rate with
 * latest-request-wins semantics; the server applies the same policy, so a
 * burst always resolves to the newest pose.
 */

import type { SolveRequest, SolveResponse } from "./types";

export interface SolverConnection {
  solve(request: SolveRequest): void;
  onResponse(handler: (response: SolveResponse) => void): void;
  onStatus(handler: (connected: boolean) => void): void;
  close(): void;
}

export class ThrottledSolveSender {
  private lastSent = -Infinity;
  private pending: SolveRequest | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private sequence = 0;

  constructor(
    private readonly connection: SolverConnection,
    private readonly minIntervalMs = 33, // ~30 requests/s
    private readonly now: () => number = () => Date.now(),
  ) {}

  /** Queue a request; bursts collapse to the most recent one. */
  send(request: SolveRequest): void {
    request.request_id = this.sequence++;
    const elapsed = this.now() - this.lastSent;
    if (elapsed >= this.minIntervalMs) {
      this.lastSent = this.now();
      this.connection.solve(request);
      return;
    }
    this.pending = request;
    if (this.timer === null) {
      this.timer = setTimeout(() => this.flush(), this.minIntervalMs - elapsed);
    }
  }

  private flush(): void {
    this.timer = null;
    if (this.pending) {
      this.lastSent = this.now();
      this.connection.solve(this.pending);
      this.pending = null;
    }
  }

  dispose(): void {
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = null;
    this.pending = null;
  }
}

/** Stream client for the /v1/stream endpoint. */
export class WebSocketSolverConnection implements SolverConnection {
  private socket: WebSocket;
  private responseHandlers: ((response: SolveResponse) => void)[] = [];
  private statusHandlers: ((connected: boolean) => void)[] = [];

  constructor(url: string, socketFactory: (url: string) => WebSocket =
              (u) => new WebSocket(u)) {
    this.socket = socketFactory(url);
    this.socket.onopen = () => this.statusHandlers.forEach((h) => h(true));
    this.socket.onclose = () => this.statusHandlers.forEach((h) => h(false));
    this.socket.onerror = () => this.statusHandlers.forEach((h) => h(false));
    this.socket.onmessage = (event: MessageEvent) => {
      const body = JSON.parse(String(event.data)) as SolveResponse;
      this.responseHandlers.forEach((h) => h(body));
    };
  }

  solve(request: SolveRequest): void {
    if (this.socket.readyState === 1 /* OPEN */) {
      this.socket.send(JSON.stringify(request));
    }
  }

  onResponse(handler: (response: SolveResponse) => void): void {
    this.responseHandlers.push(handler);
  }

  onStatus(handler: (connected: boolean) => void): void {
    this.statusHandlers.push(handler);
  }

  close(): void {
    this.socket.close();
  }
}
