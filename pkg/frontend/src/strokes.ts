// Freehand stroke capture and the JSON schema shared with the server.
//
// Pointer events arrive at device resolution; the builder keeps only
// vertices at least MIN_VERTEX_SPACING pixels apart so a long drag stays
// compact without visibly changing the drawn path.

import type { CanvasStroke, Point, WireStroke } from './types';

export const MIN_VERTEX_SPACING = 2; // px between kept vertices
export const MIN_RADIUS = 0.5;

let nextStrokeId = 1;

export class StrokeBuilder {
  private points: Point[] = [];

  constructor(
    private readonly classId: number,
    private readonly radius: number,
  ) {
    if (!Number.isInteger(classId) || classId < 1) {
      throw new Error(`class id must be a positive integer, got ${classId}`);
    }
    if (!(radius >= MIN_RADIUS)) {
      throw new Error(`radius must be >= ${MIN_RADIUS}, got ${radius}`);
    }
  }

  // Feed one pointer position; returns true when the vertex was kept.
  add(x: number, y: number): boolean {
    const last = this.points[this.points.length - 1];
    if (last !== undefined) {
      const dx = x - last[0];
      const dy = y - last[1];
      if (dx * dx + dy * dy < MIN_VERTEX_SPACING * MIN_VERTEX_SPACING) {
        return false;
      }
    }
    this.points.push([x, y]);
    return true;
  }

  get vertexCount(): number {
    return this.points.length;
  }

  // A single click yields a one-point stroke (rendered as a dot); a drag
  // that never produced a vertex yields null and is discarded.
  finish(): CanvasStroke | null {
    if (this.points.length === 0) {
      return null;
    }
    return {
      id: nextStrokeId++,
      points: this.points,
      classId: this.classId,
      radius: this.radius,
    };
  }
}

// Clamp every vertex into the image rectangle. Applied once on submit so
// strokes drawn partly past the edge still reference real pixels.
export function clampStroke(stroke: CanvasStroke, width: number, height: number): CanvasStroke {
  const points: Point[] = stroke.points.map(([x, y]) => [
    Math.min(Math.max(x, 0), width - 1),
    Math.min(Math.max(y, 0), height - 1),
  ]);
  return { ...stroke, points };
}

export function strokeToWire(stroke: CanvasStroke): WireStroke {
  return {
    points: stroke.points.map(([x, y]) => [x, y]),
    class_id: stroke.classId,
    radius: stroke.radius,
  };
}

export function strokesToJson(strokes: readonly CanvasStroke[]): string {
  return JSON.stringify(strokes.map(strokeToWire), null, 2);
}

function asFinite(value: unknown, what: string): number {
  if (typeof value !== 'number' || !Number.isFinite(value)) {
    throw new Error(`bad squiggle: ${what} is not a finite number`);
  }
  return value;
}

export function strokeFromWire(obj: unknown): CanvasStroke {
  if (typeof obj !== 'object' || obj === null) {
    throw new Error('bad squiggle: entry is not an object');
  }
  const record = obj as Record<string, unknown>;
  const rawPoints = record['points'];
  if (!Array.isArray(rawPoints) || rawPoints.length < 1) {
    throw new Error('bad squiggle: points must be a non-empty list');
  }
  const points: Point[] = rawPoints.map((p) => {
    if (!Array.isArray(p) || p.length !== 2) {
      throw new Error('bad squiggle: each point must be an [x, y] pair');
    }
    return [asFinite(p[0], 'x'), asFinite(p[1], 'y')];
  });
  const classId = record['class_id'];
  if (typeof classId !== 'number' || !Number.isInteger(classId) || classId < 1) {
    throw new Error(`bad squiggle: class_id must be a positive integer`);
  }
  const radius = record['radius'] === undefined ? 2.0 : asFinite(record['radius'], 'radius');
  if (radius < MIN_RADIUS) {
    throw new Error(`bad squiggle: radius must be >= ${MIN_RADIUS}`);
  }
  return { id: nextStrokeId++, points, classId, radius };
}

export function strokesFromJson(text: string): CanvasStroke[] {
  let data: unknown;
  try {
    data = JSON.parse(text);
  } catch (err) {
    throw new Error(`bad squiggle: ${err instanceof Error ? err.message : String(err)}`);
  }
  if (!Array.isArray(data)) {
    throw new Error('squiggle JSON must be a list');
  }
  return data.map(strokeFromWire);
}
