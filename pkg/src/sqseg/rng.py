"""Deterministic random streams.

All randomness flows through counter-based Philox generators keyed on
(seed, class id), so draws are reproducible across runs, platforms, and
thread counts, and per-class streams never interfere with each other.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def class_stream(seed: int, class_id: int = 0) -> np.random.Generator:
    """Independent generator for one (seed, class) pair.

    Streams for different class ids under the same seed are statistically
    independent, so exclusion-map draws can run in any order (or in
    parallel) without changing results.
    """
    key = np.array([int(seed) & _MASK64, int(class_id) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
