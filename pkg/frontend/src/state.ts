// Console-side session state: bounded frame history, connection status,
// and the ticker of eye commands seen in the stream.

import { FrameMessage, Mode, deltaRingRadius } from './protocol.js';

export type ConnectionStatus = 'disconnected' | 'connecting' | 'connected';

export interface TickerEntry {
  t_ms: number;
  eye: string;
  source: string;
}

export class ConsoleState {
  readonly historyLimit: number;
  history: FrameMessage[] = [];
  latest: FrameMessage | null = null;
  status: ConnectionStatus = 'disconnected';
  mode: Mode = 'decoded';
  lastError: string | null = null;
  eyeTicker: TickerEntry[] = [];
  framesReceived = 0;

  constructor(historyLimit = 900) {
    this.historyLimit = historyLimit;
  }

  pushFrame(frame: FrameMessage): void {
    this.latest = frame;
    this.framesReceived += 1;
    this.history.push(frame);
    if (this.history.length > this.historyLimit) {
      this.history.splice(0, this.history.length - this.historyLimit);
    }
    const prevEye = this.history.length > 1
      ? this.history[this.history.length - 2].eye
      : 'None';
    if (frame.eye !== prevEye && frame.eye !== 'None') {
      this.eyeTicker.push({
        t_ms: frame.t_ms,
        eye: frame.eye,
        source: frame.theta.source ?? 'decoded',
      });
      if (this.eyeTicker.length > 50) this.eyeTicker.shift();
    }
  }

  recordError(error: string): void {
    this.lastError = error;
  }

  /** Radius of the equilibrium ring for the latest gains, world units. */
  deltaRing(): number | null {
    return this.latest ? deltaRingRadius(this.latest) : null;
  }

  /** Recent centroid positions, oldest first. */
  centroidTrail(maxPoints = 300): Array<[number, number]> {
    const start = Math.max(0, this.history.length - maxPoints);
    return this.history.slice(start).map((f) => f.centroid);
  }

  posterior(): number[] {
    return this.latest?.thought?.posterior ?? [];
  }
}
