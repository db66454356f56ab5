// Canvas drawing: robots, centroid trail, and the equilibrium ring. All
// geometry goes through the aspect-preserving transform in transform.ts.

import { ConsoleState } from './state.js';
import { frameBounds, Viewport, worldScale, worldToScreen } from './transform.js';

export function drawScene(
  ctx: CanvasRenderingContext2D,
  state: ConsoleState,
  viewport: Viewport,
): void {
  ctx.clearRect(0, 0, viewport.width, viewport.height);
  ctx.fillStyle = '#10141c';
  ctx.fillRect(0, 0, viewport.width, viewport.height);
  const frame = state.latest;
  if (!frame) {
    ctx.fillStyle = '#8a93a6';
    ctx.font = '14px sans-serif';
    ctx.fillText('waiting for frames...', 16, 28);
    return;
  }
  const bounds = frameBounds(state.history.length ? state.history : [frame]);
  const toScreen = worldToScreen(bounds, viewport);
  const scale = worldScale(bounds, viewport);

  // centroid trail
  const trail = state.centroidTrail();
  if (trail.length > 1) {
    ctx.strokeStyle = '#b3405c';
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    trail.forEach((p, i) => {
      const [x, y] = toScreen(p);
      if (i === 0) ctx.moveTo(x, y);
      else ctx.lineTo(x, y);
    });
    ctx.stroke();
  }

  // equilibrium ring around the centroid
  const ring = state.deltaRing();
  if (ring !== null) {
    const [cx, cy] = toScreen(frame.centroid);
    ctx.strokeStyle = '#3f5e8f';
    ctx.setLineDash([6, 6]);
    ctx.beginPath();
    ctx.arc(cx, cy, ring * scale, 0, Math.PI * 2);
    ctx.stroke();
    ctx.setLineDash([]);
  }

  // robots
  ctx.fillStyle = '#5dd0a0';
  const glyph = Math.max(2, (frame.robot_radius ?? 0.05) * scale);
  for (const robot of frame.robots) {
    const [x, y] = toScreen([robot.x, robot.y]);
    ctx.beginPath();
    ctx.arc(x, y, glyph, 0, Math.PI * 2);
    ctx.fill();
  }

  // centroid marker
  const [mx, my] = toScreen(frame.centroid);
  ctx.strokeStyle = '#f2c14e';
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.moveTo(mx - 6, my);
  ctx.lineTo(mx + 6, my);
  ctx.moveTo(mx, my - 6);
  ctx.lineTo(mx, my + 6);
  ctx.stroke();
}
