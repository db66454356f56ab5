// Wire protocol shared with the pipeline service: JSON text frames over a
// WebSocket. Server pushes frame/error messages; the console sends
// eye/thought/gains/halt/mode commands. Unknown fields are ignored.

export type Direction = 'Left' | 'Right' | 'Up' | 'Down';
export type ThoughtLabel = 'Aggregate' | 'Disperse';
export type Mode = 'decoded' | 'manual';

export interface RobotDot {
  id: number;
  x: number;
  y: number;
}

export interface ThoughtEstimate {
  state: number;
  posterior: number[];
}

export interface Theta {
  a: number;
  b: number;
  v: [number, number];
  source?: string;
}

export interface FrameMessage {
  type: 'frame';
  t_ms: number;
  robots: RobotDot[];
  centroid: [number, number];
  thought: ThoughtEstimate | null;
  eye: string;
  theta: Theta;
  robot_radius?: number;
}

export interface ErrorMessage {
  type: 'error';
  error: string;
}

export type ServerMessage = FrameMessage | ErrorMessage;

export function parseServerMessage(raw: string): ServerMessage | null {
  let obj: unknown;
  try {
    obj = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof obj !== 'object' || obj === null) return null;
  const msg = obj as { type?: unknown };
  if (msg.type === 'frame') return obj as FrameMessage;
  if (msg.type === 'error') return obj as ErrorMessage;
  return null; // unknown server message types are ignored
}

export function eyeCommand(dir: Direction): string {
  return JSON.stringify({ type: 'eye', dir });
}

export function thoughtCommand(label: ThoughtLabel): string {
  return JSON.stringify({ type: 'thought', label });
}

export function gainsCommand(a: number, b: number): string {
  if (!(a > 0) || !(b > 0)) {
    throw new Error(`gains must be positive, got a=${a} b=${b}`);
  }
  return JSON.stringify({ type: 'gains', a, b });
}

export function haltCommand(): string {
  return JSON.stringify({ type: 'halt' });
}

export function modeCommand(value: Mode): string {
  return JSON.stringify({ type: 'mode', value });
}

/** Equilibrium ring radius implied by a frame's gains: 2r + b/a. */
export function deltaRingRadius(frame: FrameMessage, fallbackRadius = 0.05): number {
  const r = frame.robot_radius ?? fallbackRadius;
  return 2 * r + frame.theta.b / frame.theta.a;
}
