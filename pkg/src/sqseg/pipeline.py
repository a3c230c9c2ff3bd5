"""Scene-level glue: patches, per-class inference runs, and map assembly.

A scene is segmented one class at a time. Each run stacks the RGB patch
with that class's inclusion/exclusion maps into a 5-channel tensor, the
model turns it into a probability map, and assemble_semantic_map merges
all per-class maps into a single label image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import network_forward
from .signals import SignalPair

CLASS_NAMES = {
    1: "tumour",
    2: "stroma",
    3: "inflammatory",
    4: "necrosis",
    5: "others",
}

# label 0 (background) renders transparent in overlays and black in PNGs
DEFAULT_PALETTE = {
    1: (214, 39, 40),
    2: (44, 160, 44),
    3: (255, 215, 0),
    4: (85, 60, 150),
    5: (31, 119, 180),
}


@dataclass(frozen=True)
class Placement:
    """Maps a patch back onto the image it was cut from."""

    rows: tuple[int, int]
    cols: tuple[int, int]
    patch_rows: tuple[int, int]
    patch_cols: tuple[int, int]

    def write_back(self, canvas: np.ndarray, patch: np.ndarray) -> None:
        """Copy the in-image part of the patch onto the canvas in place."""
        r0, r1 = self.rows
        c0, c1 = self.cols
        pr0, pr1 = self.patch_rows
        pc0, pc1 = self.patch_cols
        canvas[r0:r1, c0:c1] = patch[pr0:pr1, pc0:pc1]


def extract_patch(image: np.ndarray, center: tuple[int, int], size: int = 512):
    """Cut a size x size window centered on (x, y), reflect-padding overruns.

    Returns (patch, placement); placement.write_back restores exactly the
    pixels that came from inside the image.
    """
    if size % 32:
        raise ValueError(f"patch size must be divisible by 32, got {size}")
    image = np.asarray(image)
    h, w = image.shape[:2]
    cx, cy = center
    half = size // 2
    r0, c0 = int(cy) - half, int(cx) - half

    pad_top = max(0, -r0)
    pad_left = max(0, -c0)
    pad_bottom = max(0, r0 + size - h)
    pad_right = max(0, c0 + size - w)
    pad = ((pad_top, pad_bottom), (pad_left, pad_right)) + ((0, 0),) * (image.ndim - 2)
    padded = np.pad(image, pad, mode="reflect") if any(sum(p) for p in pad) else image
    patch = padded[r0 + pad_top : r0 + pad_top + size,
                   c0 + pad_left : c0 + pad_left + size].copy()

    rs0, rs1 = max(r0, 0), min(r0 + size, h)
    cs0, cs1 = max(c0, 0), min(c0 + size, w)
    placement = Placement(
        rows=(rs0, rs1),
        cols=(cs0, cs1),
        patch_rows=(rs0 - r0, rs1 - r0),
        patch_cols=(cs0 - c0, cs1 - c0),
    )
    return patch, placement


@dataclass(frozen=True)
class ClassProbMap:
    """One class's per-pixel foreground probability."""

    class_id: int
    probs: np.ndarray


class NetworkModel:
    """Callable wrapper binding a network spec, weights and a thread count."""

    def __init__(self, spec, weights, threads: int = 1):
        self.spec = spec
        self.weights = weights
        self.threads = threads

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return network_forward(self.spec, self.weights, x, threads=self.threads)


def stack_inputs(image_patch: np.ndarray, pair: SignalPair) -> np.ndarray:
    """[R, G, B in [0,1], inclusion, exclusion] as a (5, H, W) tensor."""
    image_patch = np.asarray(image_patch)
    if image_patch.ndim != 3 or image_patch.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) patch, got shape {image_patch.shape}")
    if image_patch.shape[:2] != pair.inclusion.shape:
        raise ValueError(
            f"signal maps {pair.inclusion.shape} do not match patch {image_patch.shape[:2]}"
        )
    rgb = image_patch.astype(np.float32)
    if np.issubdtype(image_patch.dtype, np.integer):
        rgb /= 255.0
    return np.concatenate(
        [
            rgb.transpose(2, 0, 1),
            pair.inclusion[None].astype(np.float32),
            pair.exclusion[None].astype(np.float32),
        ]
    )


def segment_one(image_patch: np.ndarray, pair: SignalPair, model) -> np.ndarray:
    """Run the model for one class; returns an (H, W) probability map."""
    out = np.asarray(model(stack_inputs(image_patch, pair)))
    if out.ndim == 3 and out.shape[0] == 1:
        out = out[0]
    if out.shape != image_patch.shape[:2]:
        raise ValueError(
            f"model returned shape {out.shape} for patch {image_patch.shape[:2]}"
        )
    return out.astype(np.float32)


def assemble_semantic_map(maps: list[ClassProbMap]) -> np.ndarray:
    """Merge per-class probability maps into one label image.

    Multiple maps for a class combine by element-wise max. A pixel gets the
    class with the highest probability when that maximum reaches 0.5, lowest
    class id winning ties; otherwise it stays 0.
    """
    if not maps:
        raise ValueError("no probability maps to assemble")
    by_class: dict[int, np.ndarray] = {}
    shape = np.asarray(maps[0].probs).shape
    for m in maps:
        p = np.asarray(m.probs, dtype=np.float32)
        if p.shape != shape:
            raise ValueError(f"map for class {m.class_id} has shape {p.shape}, expected {shape}")
        prev = by_class.get(m.class_id)
        by_class[m.class_id] = p if prev is None else np.maximum(prev, p)

    ids = sorted(by_class)
    stack = np.stack([by_class[c] for c in ids])
    best = np.argmax(stack, axis=0)  # first (lowest id) wins ties
    labels = np.asarray(ids, dtype=np.int32)[best]
    labels[stack.max(axis=0) < 0.5] = 0
    return labels


def evaluate_scene(pred: np.ndarray, probmaps: list[ClassProbMap] | None, gt: np.ndarray):
    """Per-class and overall metrics for an assembled scene."""
    from .metrics import metrics_report

    probs = None
    if probmaps:
        probs = {}
        for m in probmaps:
            prev = probs.get(m.class_id)
            p = np.asarray(m.probs, dtype=np.float64)
            probs[m.class_id] = p if prev is None else np.maximum(prev, p)
    return metrics_report(pred, gt, probs, CLASS_NAMES)
