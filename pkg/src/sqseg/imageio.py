"""PNG and JSON file formats shared by the CLI and the HTTP service.

Binary masks are 8-bit grayscale PNGs holding 0 or 255. Label images are
paletted PNGs whose pixel values are the class ids themselves, so they
load back without a color lookup. Squiggles travel as a JSON list of
{points, class_id, radius} objects.
"""

from __future__ import annotations

import io
import json

import numpy as np
from PIL import Image

from .pipeline import DEFAULT_PALETTE
from .signals import Squiggle


def save_mask_png(path, mask: np.ndarray) -> None:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"expected an (H, W) mask, got shape {mask.shape}")
    Image.fromarray(np.where(mask.astype(bool), 255, 0).astype(np.uint8), "L").save(
        path, format="PNG"
    )


def load_mask_png(path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("L")) > 127


def save_label_png(path, labels: np.ndarray, palette: dict | None = None) -> None:
    """Write labels as a paletted PNG; pixel value == class id."""
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValueError(f"expected an (H, W) label image, got shape {labels.shape}")
    if labels.min() < 0 or labels.max() > 255:
        raise ValueError("label ids must fit in 0..255")
    img = Image.fromarray(labels.astype(np.uint8), "P")
    table = [0] * 768  # id 0 stays black
    for cid, color in (palette or DEFAULT_PALETTE).items():
        table[3 * int(cid) : 3 * int(cid) + 3] = [int(c) for c in color]
    img.putpalette(table)
    img.save(path, format="PNG")


def load_label_png(path) -> np.ndarray:
    img = Image.open(path)
    if img.mode not in ("P", "L"):
        raise ValueError(f"label images must be paletted or grayscale, got mode {img.mode}")
    return np.asarray(img, dtype=np.int32)


def load_rgb_png(path_or_bytes) -> np.ndarray:
    src = io.BytesIO(path_or_bytes) if isinstance(path_or_bytes, bytes) else path_or_bytes
    return np.asarray(Image.open(src).convert("RGB"))


def save_rgb_png(path, image: np.ndarray) -> None:
    Image.fromarray(np.asarray(image, dtype=np.uint8), "RGB").save(path, format="PNG")


def squiggle_to_obj(squiggle: Squiggle) -> dict:
    return {
        "points": [[float(x), float(y)] for x, y in squiggle.points],
        "class_id": int(squiggle.class_id),
        "radius": float(squiggle.radius),
    }


def squiggle_from_obj(obj: dict) -> Squiggle:
    try:
        return Squiggle(
            points=np.asarray(obj["points"], dtype=np.float64),
            class_id=int(obj["class_id"]),
            radius=float(obj.get("radius", 2.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"bad squiggle: {exc}") from exc


def squiggles_to_json(squiggles: list[Squiggle]) -> str:
    return json.dumps([squiggle_to_obj(s) for s in squiggles], indent=2)


def squiggles_from_json(text: str) -> list[Squiggle]:
    data = json.loads(text)
    if not isinstance(data, list):
        raise ValueError("squiggle JSON must be a list")
    return [squiggle_from_obj(obj) for obj in data]
