// Build the semi-transparent class-color overlay from a decoded label
// grid. Pure compositing: this module never sees the image pixels, only
// produces an RGBA layer to stack above them.

import type { Rgb } from './types';

export function buildOverlay(
  labels: Int32Array,
  width: number,
  height: number,
  palette: Record<string, Rgb>,
  opacity: number,
): Uint8ClampedArray<ArrayBuffer> {
  if (labels.length !== width * height) {
    throw new Error(`label grid has ${labels.length} pixels, expected ${width * height}`);
  }
  const alpha = Math.round(Math.min(Math.max(opacity, 0), 1) * 255);
  const out = new Uint8ClampedArray(width * height * 4);
  for (let i = 0; i < labels.length; i++) {
    const value = labels[i]!;
    if (value === 0) {
      continue; // background stays fully transparent
    }
    const color = palette[String(value)];
    if (color === undefined) {
      throw new Error(`no palette entry for class ${value}`);
    }
    const at = i * 4;
    out[at] = color[0];
    out[at + 1] = color[1];
    out[at + 2] = color[2];
    out[at + 3] = alpha;
  }
  return out;
}
