"""Color transfer between images in the logarithmic lab opponent space.

An RGB image is mapped to LMS cone responses, log10-compressed, and rotated
into the decorrelated lab basis. Each channel is then shifted and scaled so
its mean and spread match target statistics, and the chain is inverted back
to RGB. Matching statistics makes stains comparable across scanners without
touching tissue morphology.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_RGB_TO_LMS = np.array(
    [
        [0.3811, 0.5783, 0.0402],
        [0.1967, 0.7244, 0.0782],
        [0.0241, 0.1288, 0.8444],
    ]
)
_LOGLMS_TO_LAB = np.diag([1 / np.sqrt(3), 1 / np.sqrt(6), 1 / np.sqrt(2)]) @ np.array(
    [
        [1.0, 1.0, 1.0],
        [1.0, 1.0, -2.0],
        [1.0, -1.0, 0.0],
    ]
)
_LMS_FROM_RGB_INV = np.linalg.inv(_RGB_TO_LMS)
_LAB_TO_LOGLMS = np.linalg.inv(_LOGLMS_TO_LAB)

# log10 needs strictly positive cone responses; pure black maps here
_LMS_FLOOR = 1e-6

# spreads below this are summation noise from a flat channel, not signal;
# real 8-bit images cannot produce lab spreads anywhere near it
_FLAT_STD = 1e-8


@dataclass(frozen=True)
class StainStats:
    """Per-channel mean and spread in the lab space."""

    means: tuple[float, float, float]
    stds: tuple[float, float, float]

    def __post_init__(self):
        if len(self.means) != 3 or len(self.stds) != 3:
            raise ValueError("stain statistics need exactly 3 channels")
        if any(s < 0 for s in self.stds):
            raise ValueError("standard deviations must be non-negative")

    def as_dict(self) -> dict:
        return {"means": list(self.means), "stds": list(self.stds)}

    @classmethod
    def from_dict(cls, d: dict) -> "StainStats":
        return cls(tuple(float(v) for v in d["means"]), tuple(float(v) for v in d["stds"]))


def _to_lab(image: np.ndarray) -> np.ndarray:
    flat = image.reshape(-1, 3).astype(np.float64)
    lms = np.maximum(flat @ _RGB_TO_LMS.T, _LMS_FLOOR)
    return np.log10(lms) @ _LOGLMS_TO_LAB.T


def _from_lab(lab: np.ndarray, shape) -> np.ndarray:
    lms = np.power(10.0, lab @ _LAB_TO_LOGLMS.T)
    rgb = lms @ _LMS_FROM_RGB_INV.T
    return np.clip(rgb, 0.0, 1.0).reshape(shape)


def _check_rgb(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {image.shape}")
    return image


def stain_stats(image: np.ndarray) -> StainStats:
    """Channel means and standard deviations of the image in lab space."""
    lab = _to_lab(_check_rgb(image))
    return StainStats(tuple(lab.mean(axis=0)), tuple(lab.std(axis=0)))


def reinhard_normalize(image: np.ndarray, target: StainStats) -> np.ndarray:
    """Match the image's lab statistics to the target; values in [0, 1].

    A source channel with zero spread (flat image) keeps unit scale and is
    only re-centered on the target mean.
    """
    image = _check_rgb(image)
    if any(s <= 0 for s in target.stds):
        raise ValueError("target standard deviations must be positive")
    lab = _to_lab(image)
    mu_s = lab.mean(axis=0)
    sd_s = lab.std(axis=0)
    flat = sd_s <= _FLAT_STD
    ratio = np.where(flat, 1.0, np.asarray(target.stds) / np.where(flat, 1.0, sd_s))
    lab = (lab - mu_s) * ratio + np.asarray(target.means)
    return _from_lab(lab, image.shape)
