"""Bit-exact weight serialization.

A checkpoint is one UTF-8 JSON manifest line followed by a raw little-endian
float32 blob. The manifest carries a magic tag, the scaling factors needed to
rebuild the architecture, and one (name, shape, byte offset) record per
parameter tensor in enumeration order. Loading rebuilds the architecture from
the echoed factors and refuses any container whose entries do not match it
one-for-one.

A second, minimal format ("EUTN") moves single raw tensors between processes:
magic, u32 rank, u32 dims, float32 payload, all little-endian.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .model import NetworkSpec, Weights, build_efficient_unet, iter_layers

_MAGIC = "EUNW1"
_TENSOR_MAGIC = b"EUTN"


class WeightContainerError(ValueError):
    """Base class for unusable weight files."""


class MagicMismatchError(WeightContainerError):
    """The file is not a recognizable weight container."""


class ShapeMismatchError(WeightContainerError):
    """A manifest entry does not line up with the architecture."""


class TruncatedBlobError(WeightContainerError):
    """The float payload ends before the manifest says it should."""


def _spec_echo(spec: NetworkSpec) -> dict:
    return {
        "variant": spec.variant,
        "w": spec.w,
        "d": spec.d,
        "in_channels": spec.in_channels,
        "out_channels": spec.out_channels,
    }


def _spec_from_echo(echo: dict) -> NetworkSpec:
    try:
        variant = echo.get("variant")
        spec = build_efficient_unet(variant if variant else (echo["w"], echo["d"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise MagicMismatchError(f"manifest does not describe a buildable network: {exc}")
    if (spec.in_channels, spec.out_channels) != (
        echo.get("in_channels"),
        echo.get("out_channels"),
    ):
        raise ShapeMismatchError("manifest channel configuration is not supported")
    return spec


def save_weights(weights: Weights, path) -> None:
    """Write a checkpoint whose load() is byte-for-byte reproducible."""
    entries = []
    chunks = []
    offset = 0
    for name, shape in iter_layers(weights.spec):
        arr = weights[name]
        if tuple(arr.shape) != shape:
            raise ShapeMismatchError(
                f"layer {name}: tensor shape {tuple(arr.shape)} does not match "
                f"architecture shape {shape}"
            )
        raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entries.append({"name": name, "shape": list(shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    manifest = {"magic": _MAGIC, "spec": _spec_echo(weights.spec), "entries": entries}
    with open(path, "wb") as fh:
        fh.write(json.dumps(manifest, separators=(",", ":")).encode("utf-8"))
        fh.write(b"\n")
        for raw in chunks:
            fh.write(raw)


def load_weights(path) -> Weights:
    with open(path, "rb") as fh:
        data = fh.read()
    head, sep, blob = data.partition(b"\n")
    if not sep:
        raise MagicMismatchError("no manifest line found")
    try:
        manifest = json.loads(head.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise MagicMismatchError("manifest is not valid JSON")
    if not isinstance(manifest, dict) or manifest.get("magic") != _MAGIC:
        raise MagicMismatchError(
            f"magic mismatch: expected {_MAGIC!r}, got {manifest.get('magic')!r}"
            if isinstance(manifest, dict)
            else "manifest is not an object"
        )
    spec = _spec_from_echo(manifest.get("spec") or {})

    expected = list(iter_layers(spec))
    listed = manifest.get("entries")
    if not isinstance(listed, list) or len(listed) != len(expected):
        raise ShapeMismatchError(
            f"manifest lists {len(listed) if isinstance(listed, list) else 0} entries, "
            f"architecture has {len(expected)}"
        )

    tensors = {}
    offset = 0
    for entry, (name, shape) in zip(listed, expected):
        if entry.get("name") != name:
            raise ShapeMismatchError(
                f"layer {name}: manifest names {entry.get('name')!r} at its position"
            )
        if tuple(entry.get("shape", ())) != shape:
            raise ShapeMismatchError(
                f"layer {name}: manifest shape {entry.get('shape')} does not match "
                f"architecture shape {list(shape)}"
            )
        if entry.get("offset") != offset:
            raise WeightContainerError(f"layer {name}: blob offset is inconsistent")
        n = math.prod(shape)
        end = offset + 4 * n
        if end > len(blob):
            raise TruncatedBlobError(
                f"truncated blob: layer {name} needs bytes up to {end}, file has {len(blob)}"
            )
        tensors[name] = np.frombuffer(blob, dtype="<f4", count=n, offset=offset).reshape(shape)
        offset = end
    if offset != len(blob):
        raise WeightContainerError(f"{len(blob) - offset} trailing bytes after last tensor")
    return Weights(spec, tensors)


def save_tensor(arr: np.ndarray, path) -> None:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_TENSOR_MAGIC)
        fh.write(np.uint32(arr.ndim).tobytes())
        fh.write(np.asarray(arr.shape, dtype="<u4").tobytes())
        fh.write(arr.tobytes())


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _TENSOR_MAGIC:
        raise MagicMismatchError(f"magic mismatch: expected {_TENSOR_MAGIC!r}")
    if len(data) < 8:
        raise TruncatedBlobError("header ends before rank field")
    rank = int(np.frombuffer(data, dtype="<u4", count=1, offset=4)[0])
    if len(data) < 8 + 4 * rank:
        raise TruncatedBlobError("header ends before dims")
    shape = tuple(np.frombuffer(data, dtype="<u4", count=rank, offset=8).tolist())
    n = math.prod(shape)
    start = 8 + 4 * rank
    if len(data) < start + 4 * n:
        raise TruncatedBlobError(
            f"truncated payload: need {4 * n} bytes, have {len(data) - start}"
        )
    return np.frombuffer(data, dtype="<f4", count=n, offset=start).reshape(shape)
