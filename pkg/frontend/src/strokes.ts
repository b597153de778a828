/** Brush strokes as vector data.
 *
 *  Strokes are kept as polylines with a radius and sent to the server
 *  verbatim; the server's rasterization is authoritative.  The client-side
 *  rasterizer below mirrors it (disks swept along segments) for the mask
 *  overlay and for advisory pixel diffs, and its determinism is what makes
 *  recorded sessions replayable.
 */

import { StrokeSchema, type StrokeWire } from "./api.js";

export interface Stroke {
  points: [number, number][]; // (x, y)
  radius: number;
}

export function toWire(strokes: Stroke[]): StrokeWire[] {
  return strokes.map((s) => StrokeSchema.parse(s));
}

export function fromWire(wire: unknown[]): Stroke[] {
  return wire.map((w) => StrokeSchema.parse(w));
}

function stampDisk(
  hidden: Uint8Array,
  w: number,
  h: number,
  cx: number,
  cy: number,
  r: number,
): void {
  const y0 = Math.max(0, Math.floor(cy - r));
  const y1 = Math.min(h - 1, Math.ceil(cy + r));
  const x0 = Math.max(0, Math.floor(cx - r));
  const x1 = Math.min(w - 1, Math.ceil(cx + r));
  const r2 = r * r;
  for (let y = y0; y <= y1; y++) {
    for (let x = x0; x <= x1; x++) {
      const dx = x - cx;
      const dy = y - cy;
      if (dx * dx + dy * dy <= r2) hidden[y * w + x] = 1;
    }
  }
}

/** Rasterize strokes into a hidden bitmap (1 = hidden). */
export function rasterizeHidden(
  width: number,
  height: number,
  strokes: Stroke[],
): Uint8Array {
  const hidden = new Uint8Array(width * height);
  for (const s of strokes) {
    const pts = s.points;
    const first = pts[0];
    if (first === undefined) continue;
    stampDisk(hidden, width, height, first[0], first[1], s.radius);
    for (let i = 1; i < pts.length; i++) {
      const a = pts[i - 1]!;
      const b = pts[i]!;
      const seg = Math.hypot(b[0] - a[0], b[1] - a[1]);
      const step = Math.max(s.radius * 0.5, 1.0);
      const dots = Math.max(2, Math.floor(seg / step) + 1);
      for (let d = 0; d < dots; d++) {
        const t = d / (dots - 1);
        stampDisk(
          hidden,
          width,
          height,
          a[0] + t * (b[0] - a[0]),
          a[1] + t * (b[1] - a[1]),
          s.radius,
        );
      }
    }
  }
  return hidden;
}

/** Visible bitmap (1 = visible), complement of the stroked region. */
export function rasterizeVisible(
  width: number,
  height: number,
  strokes: Stroke[],
): Uint8Array {
  const hidden = rasterizeHidden(width, height, strokes);
  const vis = new Uint8Array(width * height);
  for (let i = 0; i < hidden.length; i++) vis[i] = hidden[i] ? 0 : 1;
  return vis;
}

function pointSegmentDistance(
  px: number,
  py: number,
  ax: number,
  ay: number,
  bx: number,
  by: number,
): number {
  const vx = bx - ax;
  const vy = by - ay;
  const len2 = vx * vx + vy * vy;
  let t = len2 === 0 ? 0 : ((px - ax) * vx + (py - ay) * vy) / len2;
  t = Math.max(0, Math.min(1, t));
  return Math.hypot(px - (ax + t * vx), py - (ay + t * vy));
}

/** True when an eraser disk touches the stroke's swept region. */
export function strokeHit(
  stroke: Stroke,
  x: number,
  y: number,
  eraserRadius: number,
): boolean {
  const reach = stroke.radius + eraserRadius;
  const pts = stroke.points;
  if (pts.length === 1) {
    const p = pts[0]!;
    return Math.hypot(x - p[0], y - p[1]) <= reach;
  }
  for (let i = 1; i < pts.length; i++) {
    const a = pts[i - 1]!;
    const b = pts[i]!;
    if (pointSegmentDistance(x, y, a[0], a[1], b[0], b[1]) <= reach) {
      return true;
    }
  }
  return false;
}
