"""Guiding-signal synthesis.

Turns ground-truth regions into sparse squiggle-like inclusion/exclusion
maps for training, and rasterizes human-drawn squiggles into the same
format for interactive use. The synthetic generator perturbs a copy of the
region through up to four randomized modifications (polygon approximation,
smoothing, partitioning, distance thresholding) and keeps the skeleton of
whatever survives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mask import (
    approximate_polygon,
    connected_components,
    distance_transform,
    mask_to_polygons,
    partition_component,
    polygons_to_mask,
    skeletonize,
    smooth_mask,
    threshold_distance_component,
)
from .rng import class_stream

__all__ = [
    "GenParams",
    "SignalPair",
    "Squiggle",
    "generate_guiding_signal",
    "make_training_pair",
    "rasterize_squiggle",
]


@dataclass
class GenParams:
    """Knobs of the randomized signal generator.

    Probabilities control whether each modification stage fires; the ranges
    bound the per-call uniform draws of that stage's parameters.
    """

    p_approx: float = 0.75
    p_smooth: float = 0.75
    p_partition: float = 0.5
    p_distthresh: float = 0.5
    approx_eps_range: tuple[float, float] = (2.0, 10.0)
    smooth_kernel_range: tuple[int, int] = (9, 25)
    smooth_sigma_range: tuple[float, float] = (3.0, 15.0)
    partition_cell: int = 96
    distthresh_fraction_range: tuple[float, float] = (0.1, 0.7)
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("p_approx", "p_smooth", "p_partition", "p_distthresh"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        for name in (
            "approx_eps_range",
            "smooth_kernel_range",
            "smooth_sigma_range",
            "distthresh_fraction_range",
        ):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} bounds out of order: {lo} > {hi}")
        klo, khi = self.smooth_kernel_range
        if klo % 2 == 0 or khi % 2 == 0:
            raise ValueError("smooth_kernel_range bounds must be odd")
        flo, fhi = self.distthresh_fraction_range
        if not (0.0 <= flo and fhi < 1.0):
            raise ValueError("distthresh_fraction_range must sit inside [0, 1)")
        if self.partition_cell < 1:
            raise ValueError("partition_cell must be >= 1")

    def to_dict(self) -> dict:
        return {
            "p_approx": self.p_approx,
            "p_smooth": self.p_smooth,
            "p_partition": self.p_partition,
            "p_distthresh": self.p_distthresh,
            "approx_eps_range": list(self.approx_eps_range),
            "smooth_kernel_range": list(self.smooth_kernel_range),
            "smooth_sigma_range": list(self.smooth_sigma_range),
            "partition_cell": self.partition_cell,
            "distthresh_fraction_range": list(self.distthresh_fraction_range),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "GenParams":
        kwargs = dict(obj)
        for name in (
            "approx_eps_range",
            "smooth_kernel_range",
            "smooth_sigma_range",
            "distthresh_fraction_range",
        ):
            if name in kwargs:
                kwargs[name] = tuple(kwargs[name])
        return cls(**kwargs)


@dataclass
class SignalPair:
    """Inclusion/exclusion guiding maps for one target class."""

    inclusion: np.ndarray
    exclusion: np.ndarray

    def __post_init__(self) -> None:
        self.inclusion = np.asarray(self.inclusion, dtype=bool)
        self.exclusion = np.asarray(self.exclusion, dtype=bool)
        if self.inclusion.shape != self.exclusion.shape:
            raise ValueError("inclusion and exclusion shapes differ")
        if (self.inclusion & self.exclusion).any():
            raise ValueError("inclusion and exclusion overlap")


@dataclass
class Squiggle:
    """Hand-drawn stroke: a polyline plus its class and brush radius."""

    points: np.ndarray
    class_id: int
    radius: float = 2.0

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        if len(self.points) < 1:
            raise ValueError("squiggle needs at least one point")
        if self.class_id < 1:
            raise ValueError("class_id must be >= 1")
        if self.radius < 0.5:
            raise ValueError("radius must be >= 0.5")


def _approximate_stage(mask: np.ndarray, eps: float) -> np.ndarray:
    h, w = mask.shape
    polys = [approximate_polygon(p, eps) for p in mask_to_polygons(mask)]
    return polygons_to_mask(polys, w, h)


def _draw_odd(stream: np.random.Generator, lo: int, hi: int) -> int:
    return int(lo + 2 * stream.integers((hi - lo) // 2 + 1))


def generate_guiding_signal(
    gt_region: np.ndarray,
    params: GenParams,
    stream: np.random.Generator,
    provenance: dict | None = None,
) -> np.ndarray:
    """Synthesize one squiggle-like signal inside a ground-truth region.

    Stages run in a fixed order, each gated by its own coin: polygon
    approximation, smoothing, partitioning, per-piece distance thresholding.
    The pieces are then skeletonized, unioned, and clipped back to the
    region. Any original component left uncovered contributes its deepest
    pixel, so every component always carries at least one signal pixel.

    Draw order from the stream is fixed: each stage's coin, then that
    stage's parameters only if the coin fired. Identical (region, params,
    stream state) always yields identical output.

    Args:
        gt_region: binary region mask, must have >= 1 foreground pixel.
        params: stage probabilities and parameter ranges.
        stream: the random stream to consume.
        provenance: optional dict, filled with the stages applied and the
            parameters drawn.

    Returns:
        Boolean signal mask, a subset of gt_region.
    """
    gt_region = np.asarray(gt_region, dtype=bool)
    if not gt_region.any():
        raise ValueError("empty region")
    stages: dict = {}

    modified = gt_region.copy()
    if stream.random() < params.p_approx:
        eps = float(stream.uniform(*params.approx_eps_range))
        stages["approx"] = {"epsilon": eps}
        modified = _approximate_stage(modified, eps)
    if stream.random() < params.p_smooth:
        method = "gaussian" if stream.integers(2) == 0 else "median"
        kernel = _draw_odd(stream, *params.smooth_kernel_range)
        sigma = float(stream.uniform(*params.smooth_sigma_range))
        stages["smooth"] = {"method": method, "kernel": kernel, "sigma": sigma}
        modified = smooth_mask(modified, method, kernel, sigma)

    pieces: list[np.ndarray] = []
    if stream.random() < params.p_partition:
        stages["partition"] = {"cell": params.partition_cell}
        labels = connected_components(modified, connectivity=8)
        for i in range(1, labels.max() + 1):
            pieces.extend(partition_component(labels == i, params.partition_cell))
    elif modified.any():
        pieces = [modified]

    if stream.random() < params.p_distthresh:
        fraction = float(stream.uniform(*params.distthresh_fraction_range))
        stages["distthresh"] = {"fraction": fraction}
        pieces = [threshold_distance_component(p, fraction) for p in pieces]

    signal = np.zeros_like(gt_region)
    for piece in pieces:
        signal |= skeletonize(piece)
    signal &= gt_region

    # cover components the modifications wiped out
    labels = connected_components(gt_region, connectivity=8)
    covered = np.unique(labels[signal])
    dist = None
    for i in range(1, labels.max() + 1):
        if i in covered:
            continue
        if dist is None:
            dist = distance_transform(gt_region)
        component = labels == i
        flat = np.where(component, dist, -1.0)
        r, c = np.unravel_index(int(np.argmax(flat)), flat.shape)
        signal[r, c] = True
        stages.setdefault("fallback_pixels", []).append([int(r), int(c)])

    if provenance is not None:
        provenance["stages"] = stages
    return signal


def make_training_pair(
    gt_labels: np.ndarray,
    target_class: int,
    params: GenParams,
    provenance: dict | None = None,
) -> SignalPair:
    """Build the inclusion/exclusion map pair for one target class.

    The inclusion map carries a synthetic signal over the target class's
    pixels; the exclusion map unions independent signals over every other
    class present in the patch. Per-class draws come from streams keyed on
    (params.seed, class id), so results do not depend on iteration order.
    Overlaps resolve in favor of inclusion. When given, provenance is
    filled with the stages applied per class id.
    """
    gt_labels = np.asarray(gt_labels)
    class_ids = [int(c) for c in np.unique(gt_labels) if c != 0]
    if int(target_class) not in class_ids:
        raise ValueError("class not present")
    per_class: dict[int, dict] = {cid: {} for cid in class_ids} if provenance is not None else {}
    inclusion = generate_guiding_signal(
        gt_labels == target_class,
        params,
        class_stream(params.seed, target_class),
        per_class.get(int(target_class)),
    )
    exclusion = np.zeros_like(inclusion)
    for cid in class_ids:
        if cid == int(target_class):
            continue
        exclusion |= generate_guiding_signal(
            gt_labels == cid, params, class_stream(params.seed, cid), per_class.get(cid)
        )
    exclusion &= ~inclusion
    if provenance is not None:
        provenance["inclusion_class"] = int(target_class)
        provenance["stages_by_class"] = {
            cid: prov.get("stages", {}) for cid, prov in per_class.items()
        }
    return SignalPair(inclusion=inclusion, exclusion=exclusion)


def _stamp_segment(canvas: np.ndarray, p0: np.ndarray, p1: np.ndarray, radius: float) -> None:
    """Mark pixels whose centers lie within radius of the segment p0-p1."""
    h, w = canvas.shape
    x_lo = int(np.floor(min(p0[0], p1[0]) - radius))
    x_hi = int(np.ceil(max(p0[0], p1[0]) + radius))
    y_lo = int(np.floor(min(p0[1], p1[1]) - radius))
    y_hi = int(np.ceil(max(p0[1], p1[1]) + radius))
    x_lo, x_hi = max(0, x_lo), min(w - 1, x_hi)
    y_lo, y_hi = max(0, y_lo), min(h - 1, y_hi)
    if x_lo > x_hi or y_lo > y_hi:
        return
    xs = np.arange(x_lo, x_hi + 1, dtype=np.float64)
    ys = np.arange(y_lo, y_hi + 1, dtype=np.float64)
    px, py = np.meshgrid(xs, ys)
    dx, dy = p1[0] - p0[0], p1[1] - p0[1]
    denom = dx * dx + dy * dy
    if denom == 0.0:
        d2 = (px - p0[0]) ** 2 + (py - p0[1]) ** 2
    else:
        t = np.clip(((px - p0[0]) * dx + (py - p0[1]) * dy) / denom, 0.0, 1.0)
        d2 = (px - (p0[0] + t * dx)) ** 2 + (py - (p0[1] + t * dy)) ** 2
    canvas[y_lo : y_hi + 1, x_lo : x_hi + 1] |= d2 <= radius * radius


def rasterize_squiggle(
    squiggles: list[Squiggle],
    target_class: int,
    width: int,
    height: int,
) -> SignalPair:
    """Rasterize drawn strokes into inclusion/exclusion maps.

    Each stroke paints a disk of its radius swept along its polyline.
    Strokes of target_class land in the inclusion map, every other class in
    the exclusion map; inclusion wins where they overlap. Geometry outside
    the canvas is clipped.
    """
    if width < 1 or height < 1:
        raise ValueError("canvas must be at least 1x1")
    inclusion = np.zeros((height, width), dtype=bool)
    exclusion = np.zeros((height, width), dtype=bool)
    for squiggle in squiggles:
        canvas = inclusion if squiggle.class_id == int(target_class) else exclusion
        pts = squiggle.points
        if len(pts) == 1:
            _stamp_segment(canvas, pts[0], pts[0], squiggle.radius)
        for i in range(len(pts) - 1):
            _stamp_segment(canvas, pts[i], pts[i + 1], squiggle.radius)
    exclusion &= ~inclusion
    return SignalPair(inclusion=inclusion, exclusion=exclusion)
