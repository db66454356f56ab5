import { FrameMessage } from '../src/protocol.js';

export function makeFrame(overrides: Partial<FrameMessage> = {}): FrameMessage {
  return {
    type: 'frame',
    t_ms: 33,
    robots: [
      { id: 0, x: 0, y: 0 },
      { id: 1, x: 1, y: 0 },
      { id: 2, x: 0.5, y: 1 },
    ],
    centroid: [0.5, 0.33],
    thought: { state: 1, posterior: [0.2, 0.8] },
    eye: 'None',
    theta: { a: 2, b: 8, v: [0, 0], source: 'decoded' },
    robot_radius: 0.05,
    ...overrides,
  };
}
