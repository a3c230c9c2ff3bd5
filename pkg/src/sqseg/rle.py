"""Run-length encoding for label grids on the wire.

The encoded form is a plain dict so it serializes to JSON untouched:
{"width": W, "height": H, "runs": [[value, count], ...]} with runs in
row-major order. Self-describing and trivially decodable client-side.
"""

from __future__ import annotations

import numpy as np


def rle_encode(labels: np.ndarray) -> dict:
    """Encode an (H, W) integer label grid; lossless."""
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValueError(f"expected an (H, W) label grid, got shape {labels.shape}")
    h, w = labels.shape
    flat = labels.reshape(-1)
    runs: list[list[int]] = []
    if flat.size:
        breaks = np.flatnonzero(flat[1:] != flat[:-1]) + 1
        starts = np.concatenate(([0], breaks))
        ends = np.concatenate((breaks, [flat.size]))
        runs = [[int(flat[s]), int(e - s)] for s, e in zip(starts, ends)]
    return {"width": int(w), "height": int(h), "runs": runs}


def rle_decode(encoded: dict) -> np.ndarray:
    """Decode back to an (H, W) int32 grid; counts must cover every pixel."""
    try:
        w = int(encoded["width"])
        h = int(encoded["height"])
        runs = encoded["runs"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"run-length payload missing field: {exc}") from exc
    if w < 1 or h < 1:
        raise ValueError(f"bad grid size {w}x{h}")
    values = []
    total = 0
    for run in runs:
        value, count = int(run[0]), int(run[1])
        if count < 1:
            raise ValueError(f"non-positive run count {count}")
        values.append(np.full(count, value, dtype=np.int32))
        total += count
    if total != w * h:
        raise ValueError(f"runs cover {total} pixels, grid has {w * h}")
    return np.concatenate(values).reshape(h, w)
