"""Geometric and morphological primitives on binary masks.

Masks are 2D boolean numpy arrays indexed [row, col]. Polygon vertices are
(x, y) points in pixel coordinates where pixel (r, c) has its center at
x = c, y = r and occupies the square [c - 0.5, c + 0.5] x [r - 0.5, r + 0.5].
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

__all__ = [
    "Polygon",
    "connected_components",
    "mask_to_polygons",
    "polygons_to_mask",
    "approximate_polygon",
    "smooth_mask",
    "distance_transform",
    "threshold_distance_component",
    "partition_component",
    "skeletonize",
]


@dataclass
class Polygon:
    """Ordered vertex list, either a closed ring or an open polyline.

    Attributes:
        vertices: (N, 2) float array of (x, y) points. Closed rings need
            N >= 3, open polylines N >= 2; consecutive vertices must differ.
        closed: True for a ring (last vertex connects back to the first).
    """

    vertices: np.ndarray
    closed: bool = True

    def __post_init__(self) -> None:
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 2)
        minimum = 3 if self.closed else 2
        if len(self.vertices) < minimum:
            raise ValueError(
                f"{'closed' if self.closed else 'open'} polygon needs >= {minimum} vertices"
            )
        if np.any(np.all(self.vertices[1:] == self.vertices[:-1], axis=1)):
            raise ValueError("consecutive duplicate vertices")

    def signed_area(self) -> float:
        """Shoelace area; positive for outer rings, negative for holes."""
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        return float(np.sum(x * yn - xn * y) / 2.0)

    def to_json(self) -> str:
        return json.dumps({"vertices": self.vertices.tolist(), "closed": self.closed})

    @classmethod
    def from_json(cls, text: str) -> "Polygon":
        obj = json.loads(text)
        return cls(np.asarray(obj["vertices"], dtype=np.float64), bool(obj["closed"]))


_STRUCT_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_STRUCT_8 = np.ones((3, 3), dtype=bool)


def connected_components(mask: np.ndarray, connectivity: int = 8) -> np.ndarray:
    """Label connected foreground regions.

    Args:
        mask: 2D boolean mask.
        connectivity: 4 or 8.

    Returns:
        int32 map of the same shape; 0 is background, components carry
        contiguous ids 1..M.
    """
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    structure = _STRUCT_4 if connectivity == 4 else _STRUCT_8
    labels, _ = ndimage.label(np.asarray(mask, dtype=bool), structure=structure)
    return labels.astype(np.int32)


# ---------------------------------------------------------------------------
# Polygon extraction / rasterization
# ---------------------------------------------------------------------------

# Directed boundary edges keep foreground on the left of travel (y grows
# downward, so "left" of direction (dx, dy) is (-dy, dx)). Outer rings come
# out with positive shoelace area, holes negative.
#
# For a foreground pixel (r, c) with background across a side:
#   north side -> edge runs east, south -> west, west -> north, east -> south.


def _boundary_edges(mask: np.ndarray):
    """Yield directed unit edges as corner-grid index pairs.

    Corner (i, j) of the grid sits at x = j - 0.5, y = i - 0.5, so pixel
    (r, c) has corners (r, c), (r, c+1), (r+1, c+1), (r+1, c).
    """
    h, w = mask.shape
    padded = np.zeros((h + 2, w + 2), dtype=bool)
    padded[1:-1, 1:-1] = mask
    edges = {}  # start corner -> list of end corners

    def add(r0, c0, r1, c1):
        edges.setdefault((r0, c0), []).append((r1, c1))

    fg = padded[1:-1, 1:-1]
    north_bg = ~padded[:-2, 1:-1] & fg
    south_bg = ~padded[2:, 1:-1] & fg
    west_bg = ~padded[1:-1, :-2] & fg
    east_bg = ~padded[1:-1, 2:] & fg
    for r, c in zip(*np.nonzero(north_bg)):
        add(r, c, r, c + 1)
    for r, c in zip(*np.nonzero(south_bg)):
        add(r + 1, c + 1, r + 1, c)
    for r, c in zip(*np.nonzero(west_bg)):
        add(r + 1, c, r, c)
    for r, c in zip(*np.nonzero(east_bg)):
        add(r, c + 1, r + 1, c + 1)
    return edges


def mask_to_polygons(mask: np.ndarray) -> list[Polygon]:
    """Trace component boundaries into polygons.

    Returns one positively-oriented outer ring per 8-connected component and
    one negatively-oriented ring per hole. Rasterizing the result with
    polygons_to_mask reproduces the input exactly.
    """
    mask = np.asarray(mask, dtype=bool)
    edges = _boundary_edges(mask)
    polygons: list[Polygon] = []
    while edges:
        first_corner = next(iter(edges))
        start = (first_corner, edges[first_corner][-1])
        ring = []
        a, b = start
        while True:
            ring.append(a)
            edges[a].remove(b)
            if not edges[a]:
                del edges[a]
            candidates = list(edges.get(b, ()))
            if b == start[0]:
                candidates.append(start[1])  # consumed start edge can close the ring
            if len(candidates) == 1:
                nxt = candidates[0]
            else:
                # Corner where two diagonal squares touch: continue with the
                # left turn, so a component pinched at the corner keeps one
                # outer ring (foreground 8-connected) while diagonally
                # touching holes stay separate (background 4-connected).
                din = (b[1] - a[1], b[0] - a[0])  # (dx, dy)
                nxt = min(
                    candidates,
                    key=lambda c: din[0] * (c[0] - b[0]) - din[1] * (c[1] - b[1]),
                )
            if (b, nxt) == start:
                break
            a, b = b, nxt
        pts = np.array([(c - 0.5, r - 0.5) for r, c in ring], dtype=np.float64)
        pts = _merge_collinear(pts)
        polygons.append(Polygon(pts, closed=True))
    return polygons


def _merge_collinear(pts: np.ndarray) -> np.ndarray:
    """Drop ring vertices that sit on the segment joining their neighbours."""
    n = len(pts)
    prev_pts = np.roll(pts, 1, axis=0)
    next_pts = np.roll(pts, -1, axis=0)
    a = next_pts - prev_pts
    b = pts - prev_pts
    crossed = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    keep = crossed != 0
    if keep.sum() < 3:  # pragma: no cover - rings always turn >= 4 times
        return pts
    return pts[keep]


def polygons_to_mask(polys: list[Polygon], width: int, height: int) -> np.ndarray:
    """Rasterize polygons with the even-odd rule sampled at pixel centers.

    Pixel (r, c) is foreground iff the point (c, r) is covered an odd number
    of times. Geometry outside the canvas is clipped. Open polylines and
    zero-area rings contribute nothing.
    """
    if width < 1 or height < 1:
        raise ValueError("canvas must be at least 1x1")
    # diff[r, c] toggles parity for centers at x >= c on row r
    diff = np.zeros((height, width + 1), dtype=np.int64)
    for poly in polys:
        if not poly.closed:
            continue
        verts = poly.vertices
        x0, y0 = verts[:, 0], verts[:, 1]
        x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
        for ex0, ey0, ex1, ey1 in zip(x0, y0, x1, y1):
            if ey0 == ey1:
                continue
            ylo, yhi = (ey0, ey1) if ey0 < ey1 else (ey1, ey0)
            # half-open rule [ylo, yhi): a vertex on a scanline counts once
            r_first = max(0, int(np.ceil(ylo)))
            r_last = min(height - 1, int(np.ceil(yhi)) - 1)
            if r_last < r_first:
                continue
            rows = np.arange(r_first, r_last + 1)
            xc = ex0 + (rows - ey0) * (ex1 - ex0) / (ey1 - ey0)
            cols = np.clip(np.ceil(xc).astype(np.int64), 0, width)
            np.add.at(diff, (rows, cols), 1)
    return (np.cumsum(diff, axis=1)[:, :width] % 2).astype(bool)


# ---------------------------------------------------------------------------
# Douglas-Peucker approximation
# ---------------------------------------------------------------------------


def _point_segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from each point to the segment a-b (not the infinite line)."""
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.linalg.norm(points - a, axis=1)
    t = np.clip(((points - a) @ ab) / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.linalg.norm(points - proj, axis=1)


def _dp_open(verts: np.ndarray, epsilon: float) -> np.ndarray:
    """Douglas-Peucker on an open chain; returns a boolean keep map."""
    n = len(verts)
    keep = np.zeros(n, dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, n - 1)]
    while stack:
        i, j = stack.pop()
        if j <= i + 1:
            continue
        inner = verts[i + 1 : j]
        dists = _point_segment_distance(inner, verts[i], verts[j])
        k = int(np.argmax(dists))
        if dists[k] > epsilon:
            split = i + 1 + k
            keep[split] = True
            stack.append((i, split))
            stack.append((split, j))
    return keep


def _farthest_pair(verts: np.ndarray) -> tuple[int, int]:
    """Indices of the two mutually farthest vertices (via the convex hull)."""
    hull_idx = _convex_hull_indices(verts)
    hull = verts[hull_idx]
    d2 = np.sum((hull[:, None, :] - hull[None, :, :]) ** 2, axis=2)
    i, j = np.unravel_index(int(np.argmax(d2)), d2.shape)
    a, b = int(hull_idx[i]), int(hull_idx[j])
    return (a, b) if a < b else (b, a)


def _convex_hull_indices(pts: np.ndarray) -> np.ndarray:
    order = np.lexsort((pts[:, 1], pts[:, 0]))

    def build(indices):
        out = []
        for idx in indices:
            while len(out) >= 2:
                o, a = pts[out[-2]], pts[out[-1]]
                if (a[0] - o[0]) * (pts[idx][1] - o[1]) - (a[1] - o[1]) * (pts[idx][0] - o[0]) <= 0:
                    out.pop()
                else:
                    break
            out.append(idx)
        return out

    lower = build(order)
    upper = build(order[::-1])
    return np.array(lower[:-1] + upper[:-1], dtype=np.intp)


def approximate_polygon(poly: Polygon, epsilon: float) -> Polygon:
    """Decimate a polygon, keeping every removed vertex within epsilon.

    Open polylines anchor at their endpoints. Closed rings anchor at the two
    mutually farthest vertices and are simplified as two chains. The output
    vertex list is always a subsequence of the input.

    Args:
        poly: input polygon or polyline.
        epsilon: maximum allowed perpendicular deviation, >= 0.

    Returns:
        Simplified polygon of the same kind.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    verts = poly.vertices
    if not poly.closed:
        keep = _dp_open(verts, epsilon)
        return Polygon(verts[keep], closed=False)

    a, b = _farthest_pair(verts)
    n = len(verts)
    rolled = np.roll(verts, -a, axis=0)
    cut = b - a
    keep = _ring_keep(rolled, [0, cut], epsilon)
    if keep.sum() < 3:
        # Ring would collapse to a 2-gon. Promote the most deviant vertex to
        # a third anchor and redo the chains, so the deviation bound still
        # holds against the final segments.
        dists = _point_segment_distance(rolled, rolled[0], rolled[cut])
        dists[0] = dists[cut] = -1.0
        third = int(np.argmax(dists))
        keep = _ring_keep(rolled, sorted({0, cut, third}), epsilon)
    # report survivors in the original vertex order
    keep_original = np.zeros(n, dtype=bool)
    keep_original[(np.arange(n) + a) % n] = keep
    return Polygon(verts[keep_original], closed=True)


def _ring_keep(rolled: np.ndarray, anchors: list[int], epsilon: float) -> np.ndarray:
    """Run open-chain decimation between consecutive ring anchors."""
    n = len(rolled)
    keep = np.zeros(n, dtype=bool)
    for i, p in enumerate(anchors):
        q = anchors[(i + 1) % len(anchors)]
        if q > p:
            keep[p : q + 1] |= _dp_open(rolled[p : q + 1], epsilon)
        else:
            flags = _dp_open(np.vstack([rolled[p:], rolled[: q + 1]]), epsilon)
            keep[p:] |= flags[: n - p]
            keep[: q + 1] |= flags[n - p :]
    return keep


# ---------------------------------------------------------------------------
# Smoothing
# ---------------------------------------------------------------------------


def _check_kernel(kernel: int) -> int:
    kernel = int(kernel)
    if kernel < 3 or kernel % 2 == 0:
        raise ValueError("kernel must be odd and >= 3")
    return kernel


def smooth_mask(
    mask: np.ndarray,
    method: str = "gaussian",
    kernel: int = 25,
    sigma: float = 15.0,
) -> np.ndarray:
    """Low-pass a binary mask and re-binarize at 0.5.

    Args:
        mask: 2D boolean mask, treated as a 0/1 image.
        method: "gaussian" (separable, truncated, normalized) or "median"
            (binary majority over the kernel window).
        kernel: odd window size >= 3.
        sigma: gaussian standard deviation, > 0.

    Returns:
        Smoothed boolean mask. Borders use symmetric reflect padding, so a
        constant mask is a fixed point of either filter.
    """
    mask = np.asarray(mask, dtype=bool)
    kernel = _check_kernel(kernel)
    half = kernel // 2
    padded = np.pad(mask.astype(np.float64), half, mode="symmetric")
    if method == "gaussian":
        if sigma <= 0:
            raise ValueError("sigma must be > 0")
        taps = np.exp(-np.arange(-half, half + 1, dtype=np.float64) ** 2 / (2.0 * sigma**2))
        taps /= taps.sum()
        h, w = mask.shape
        rows = np.zeros((h, w + 2 * half), dtype=np.float64)
        for k in range(kernel):
            rows += taps[k] * padded[k : k + h, :]
        out = np.zeros((h, w), dtype=np.float64)
        for k in range(kernel):
            out += taps[k] * rows[:, k : k + w]
        return out >= 0.5
    if method == "median":
        # Majority vote over the window via an integral image.
        integral = np.zeros((padded.shape[0] + 1, padded.shape[1] + 1), dtype=np.int64)
        integral[1:, 1:] = np.cumsum(np.cumsum(padded.astype(np.int64), axis=0), axis=1)
        h, w = mask.shape
        window = (
            integral[kernel : kernel + h, kernel : kernel + w]
            - integral[:h, kernel : kernel + w]
            - integral[kernel : kernel + h, :w]
            + integral[:h, :w]
        )
        return window >= (kernel * kernel + 1) // 2
    raise ValueError(f"unknown filter {method!r}")


# ---------------------------------------------------------------------------
# Distance transform and derived ops
# ---------------------------------------------------------------------------


def distance_transform(mask: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance to the nearest background pixel.

    The canvas border counts as adjacent to background (an implicit
    background ring), so an all-foreground image still gets finite values.
    """
    mask = np.asarray(mask, dtype=bool)
    padded = np.zeros((mask.shape[0] + 2, mask.shape[1] + 2), dtype=bool)
    padded[1:-1, 1:-1] = mask
    return ndimage.distance_transform_edt(padded)[1:-1, 1:-1]


def threshold_distance_component(mask: np.ndarray, fraction: float) -> np.ndarray:
    """Keep, per 8-connected component, pixels at >= fraction of its peak depth.

    The deepest pixel of every component always survives, so no component
    vanishes for fraction < 1.
    """
    if not 0.0 <= fraction < 1.0:
        raise ValueError("fraction must be in [0, 1)")
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return mask.copy()
    dist = distance_transform(mask)
    labels = connected_components(mask, connectivity=8)
    m = labels.max()
    peak = ndimage.maximum(dist, labels=labels, index=np.arange(1, m + 1))
    peak = np.concatenate([[0.0], np.atleast_1d(peak)])
    return mask & (dist >= fraction * peak[labels])


def partition_component(component: np.ndarray, cell_size: int) -> list[np.ndarray]:
    """Split a component into bounding-box grid cells of roughly cell_size.

    An axis is cut only if the bounding-box extent exceeds cell_size; it then
    gets ceil(extent / cell_size) equal bands. Pieces are disjoint, non-empty,
    and their union is the input.
    """
    if cell_size < 1:
        raise ValueError("cell_size must be >= 1")
    component = np.asarray(component, dtype=bool)
    ys, xs = np.nonzero(component)
    if ys.size == 0:
        return []
    r0, r1 = int(ys.min()), int(ys.max())
    c0, c1 = int(xs.min()), int(xs.max())

    def bands(lo: int, hi: int) -> list[tuple[int, int]]:
        extent = hi - lo + 1
        n = -(-extent // cell_size) if extent > cell_size else 1
        edges = lo + extent * np.arange(n + 1) / n
        return [(int(np.ceil(edges[i])), int(np.ceil(edges[i + 1]))) for i in range(n)]

    pieces = []
    for rb0, rb1 in bands(r0, r1):
        for cb0, cb1 in bands(c0, c1):
            piece = np.zeros_like(component)
            piece[rb0:rb1, cb0:cb1] = component[rb0:rb1, cb0:cb1]
            if piece.any():
                pieces.append(piece)
    return pieces


# ---------------------------------------------------------------------------
# Thinning
# ---------------------------------------------------------------------------

# Neighbour bit layout, bit k set when the neighbour at _OFFSETS[k] is
# foreground: NW, N, NE, W, E, SW, S, SE.
_OFFSETS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


def _thinning_luts() -> tuple[np.ndarray, np.ndarray]:
    """Deletion tables for the two subiterations.

    A pixel is deletable when its neighbourhood has a single foreground
    crossing (removal cannot split the component), between 2 and 3 in the
    pairwise-occupancy count (endpoints and interior pixels survive), and the
    subiteration's directional condition holds.
    """
    bit = {off: k for k, off in enumerate(_OFFSETS)}
    # x1..x8 walk the neighbourhood E, NE, N, NW, W, SW, S, SE
    ring = [(0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1)]
    lut1 = np.zeros(256, dtype=bool)
    lut2 = np.zeros(256, dtype=bool)
    for code in range(256):
        x = [bool(code >> bit[off] & 1) for off in ring]

        def g(i: int) -> bool:
            return x[(i - 1) % 8]

        crossings = sum(
            1 for i in (1, 2, 3, 4) if not g(2 * i - 1) and (g(2 * i) or g(2 * i + 1))
        )
        n1 = sum(1 for k in (1, 2, 3, 4) if g(2 * k - 1) or g(2 * k))
        n2 = sum(1 for k in (1, 2, 3, 4) if g(2 * k) or g(2 * k + 1))
        core = crossings == 1 and 2 <= min(n1, n2) <= 3
        lut1[code] = core and not ((g(2) or g(3) or not g(8)) and g(1))
        lut2[code] = core and not ((g(6) or g(7) or not g(4)) and g(5))
    return lut1, lut2


_LUT1, _LUT2 = _thinning_luts()


def _neighbour_codes(mask: np.ndarray) -> np.ndarray:
    h, w = mask.shape
    padded = np.zeros((h + 2, w + 2), dtype=np.uint8)
    padded[1:-1, 1:-1] = mask
    codes = np.zeros((h, w), dtype=np.uint16)
    for k, (dr, dc) in enumerate(_OFFSETS):
        codes |= padded[1 + dr : 1 + dr + h, 1 + dc : 1 + dc + w].astype(np.uint16) << k
    return codes


def skeletonize(mask: np.ndarray) -> np.ndarray:
    """Thin a mask to a connected medial curve.

    Two-subiteration parallel boundary thinning. The result is a subset of
    the input, keeps the 8-connected component count, contains no pixel with
    a fully-foreground 3x3 neighbourhood, and never loses curve endpoints.
    """
    mask = np.asarray(mask, dtype=bool)
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        return mask.copy()
    r0, r1 = int(ys.min()), int(ys.max()) + 1
    c0, c1 = int(xs.min()), int(xs.max()) + 1
    work = mask[r0:r1, c0:c1].copy()
    while True:
        changed = False
        for lut in (_LUT1, _LUT2):
            kill = work & lut[_neighbour_codes(work)]
            if kill.any():
                work &= ~kill
                changed = True
        if not changed:
            break
    out = np.zeros_like(mask)
    out[r0:r1, c0:c1] = work
    return out
