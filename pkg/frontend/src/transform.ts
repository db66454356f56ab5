// World-to-screen mapping that preserves aspect ratio: a uniform scale is
// chosen for both axes and the world box is centered in the viewport.
// Screen y grows downward, world y upward.

import { FrameMessage } from './protocol.js';

export interface Bounds {
  minX: number;
  maxX: number;
  minY: number;
  maxY: number;
}

export interface Viewport {
  width: number;
  height: number;
  padding?: number;
}

export function frameBounds(frames: FrameMessage[], minSpan = 2): Bounds {
  let minX = Infinity, maxX = -Infinity, minY = Infinity, maxY = -Infinity;
  for (const f of frames) {
    for (const r of f.robots) {
      if (r.x < minX) minX = r.x;
      if (r.x > maxX) maxX = r.x;
      if (r.y < minY) minY = r.y;
      if (r.y > maxY) maxY = r.y;
    }
    minX = Math.min(minX, f.centroid[0]);
    maxX = Math.max(maxX, f.centroid[0]);
    minY = Math.min(minY, f.centroid[1]);
    maxY = Math.max(maxY, f.centroid[1]);
  }
  if (!isFinite(minX)) {
    minX = -minSpan; maxX = minSpan; minY = -minSpan; maxY = minSpan;
  }
  // keep a minimum span so a stationary point does not blow up the scale
  const cx = (minX + maxX) / 2;
  const cy = (minY + maxY) / 2;
  const spanX = Math.max(maxX - minX, minSpan);
  const spanY = Math.max(maxY - minY, minSpan);
  return {
    minX: cx - spanX / 2,
    maxX: cx + spanX / 2,
    minY: cy - spanY / 2,
    maxY: cy + spanY / 2,
  };
}

export function worldScale(bounds: Bounds, viewport: Viewport): number {
  const pad = viewport.padding ?? 20;
  const w = Math.max(viewport.width - 2 * pad, 1);
  const h = Math.max(viewport.height - 2 * pad, 1);
  return Math.min(w / (bounds.maxX - bounds.minX),
                  h / (bounds.maxY - bounds.minY));
}

export function worldToScreen(
  bounds: Bounds,
  viewport: Viewport,
): (p: [number, number]) => [number, number] {
  const scale = worldScale(bounds, viewport);
  const cx = (bounds.minX + bounds.maxX) / 2;
  const cy = (bounds.minY + bounds.maxY) / 2;
  const sx = viewport.width / 2;
  const sy = viewport.height / 2;
  return ([x, y]) => [sx + (x - cx) * scale, sy - (y - cy) * scale];
}
