// Client-side decoder for the run-length label wire format.
//
// The payload is row-major [value, count] pairs. Decoding validates the
// geometry up front: every run must have a positive integer count and the
// counts must cover exactly width * height pixels.

import type { RlePayload } from './types';

export function decodeRle(payload: RlePayload): Int32Array {
  const { width, height, runs } = payload;
  if (!Number.isInteger(width) || !Number.isInteger(height) || width < 1 || height < 1) {
    throw new Error(`bad label grid dimensions: ${width}x${height}`);
  }
  if (!Array.isArray(runs)) {
    throw new Error('run-length payload missing field: runs');
  }
  const total = width * height;
  let covered = 0;
  for (const run of runs) {
    if (!Array.isArray(run) || run.length !== 2) {
      throw new Error('run-length payload missing field: [value, count]');
    }
    const [value, count] = run;
    if (!Number.isInteger(value) || value < 0) {
      throw new Error(`bad run value: ${value}`);
    }
    if (!Number.isInteger(count) || count < 1) {
      throw new Error(`non-positive run count: ${count}`);
    }
    covered += count;
  }
  if (covered !== total) {
    throw new Error(`runs cover ${covered} pixels, grid has ${total}`);
  }
  const out = new Int32Array(total);
  let at = 0;
  for (const [value, count] of runs) {
    out.fill(value, at, at + count);
    at += count;
  }
  return out;
}
