"""Efficient-UNet construction, weight bookkeeping, and forward inference.

The network is a fixed encoder/decoder table parameterized by a width
multiplier (channels, rounded to multiples of 8) and a depth multiplier
(MIRSE repetitions, ceiling). Kernel sizes and the number of Upscale and
RMS blocks never change across variants.

Every parameter tensor has a stable dotted path name ("encoder.s3.r1.dw.conv",
"decoder.d02_rms.b0.bn.gamma", ...). iter_layers() walks the architecture and
yields (name, shape) in a fixed order; counting, initialization, container
serialization, and the forward pass all resolve weights through those names,
so the enumeration is the single source of truth for what a network contains.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .ops import batchnorm_infer, conv2d, sigmoid, squeeze_excite, swish, transposed_conv2d

VARIANTS = {
    "B0": (1.0, 1.0),
    "B1": (1.0, 1.1),
    "B2": (1.1, 1.2),
    "B3": (1.2, 1.4),
}

_KINDS = ("stem", "mirse", "upscale", "rms", "head")
_PATH_TAG = {"upscale": "up", "mirse": "mirse", "rms": "rms"}


@dataclass(frozen=True)
class StageSpec:
    """One row of the architecture table."""

    kind: str
    k: int | tuple[int, int, int, int]
    f: int
    r: int = 1
    stride2: bool = False
    d: tuple[int, int, int, int] | None = None
    ratio: int = 6
    s: float = 0.25

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown stage kind {self.kind!r}")
        if self.f < 1 or self.r < 1:
            raise ValueError("channels and repetitions must be >= 1")
        if self.kind == "rms":
            if not (isinstance(self.k, tuple) and len(self.k) == 4):
                raise ValueError("rms stage needs exactly 4 kernel sizes")
            if not (isinstance(self.d, tuple) and len(self.d) == 4):
                raise ValueError("rms stage needs exactly 4 dilation rates")
            if any(k % 2 == 0 for k in self.k) or any(d < 1 for d in self.d):
                raise ValueError("rms kernels must be odd and dilations >= 1")
        else:
            if not isinstance(self.k, int) or self.k % 2 == 0:
                raise ValueError("kernel size must be an odd integer")


@dataclass(frozen=True)
class NetworkSpec:
    """A fully resolved network: scaled stages plus skip wiring."""

    encoder: tuple[StageSpec, ...]
    decoder: tuple[StageSpec, ...]
    skips: tuple[tuple[int, int], ...]
    w: float = 1.0
    d: float = 1.0
    in_channels: int = 5
    out_channels: int = 1
    variant: str | None = None

    def __post_init__(self):
        downs = sum(1 for st in self.encoder if st.kind == "stem" or st.stride2)
        ups = sum(1 for st in self.decoder if st.kind == "upscale")
        if downs != ups:
            raise ValueError(
                f"spatial bookkeeping does not close: {downs} stride-2 stages vs {ups} upscales"
            )


# Baseline table. Starred (stride2) MIRSE stages halve resolution on their
# first repetition; the first MIRSE stage keeps expansion ratio 1.
_ENCODER_TABLE = (
    StageSpec("stem", k=3, f=32, stride2=True),
    StageSpec("mirse", k=3, f=16, r=1, ratio=1),
    StageSpec("mirse", k=3, f=24, r=2, stride2=True),
    StageSpec("mirse", k=5, f=40, r=2, stride2=True),
    StageSpec("mirse", k=3, f=80, r=3, stride2=True),
    StageSpec("mirse", k=5, f=112, r=3),
    StageSpec("mirse", k=5, f=192, r=5, stride2=True),
    StageSpec("mirse", k=3, f=320, r=1),
)

_DECODER_TABLE = (
    StageSpec("upscale", k=3, f=320),
    StageSpec("mirse", k=5, f=192, r=3),
    StageSpec("rms", k=(3, 5, 5, 7), d=(3, 3, 5, 7), f=192),
    StageSpec("mirse", k=5, f=112, r=3),
    StageSpec("upscale", k=3, f=112),
    StageSpec("mirse", k=3, f=80, r=3),
    StageSpec("rms", k=(3, 3, 5, 5), d=(1, 3, 3, 5), f=80),
    StageSpec("upscale", k=3, f=80),
    StageSpec("mirse", k=5, f=40, r=2),
    StageSpec("upscale", k=3, f=40),
    StageSpec("mirse", k=3, f=24, r=2),
    StageSpec("upscale", k=3, f=24),
    StageSpec("mirse", k=3, f=16, r=1),
    StageSpec("head", k=1, f=1),
)

# encoder index -> decoder index: the last encoder output at 1/16, 1/8, 1/4
# and 1/2 resolution feeds the matching decoder upscale; the final upscale to
# full resolution has no encoder features to concatenate.
_SKIPS = ((5, 0), (3, 4), (2, 7), (1, 9))


def round_filters(f: int, w: float) -> int:
    """Scale a channel count and round to a multiple of 8 (never below 8,
    never losing more than 10% of the scaled value)."""
    scaled = f * w
    out = max(8, int(scaled + 4) // 8 * 8)
    if out < 0.9 * scaled:
        out += 8
    return out


def round_repeats(r: int, d: float) -> int:
    return math.ceil(r * d)


def build_efficient_unet(variant="B0") -> NetworkSpec:
    """Resolve a variant name or explicit (width, depth) factors into a spec.

    Channels scale for every block except the single-channel head; MIRSE
    repetition counts scale with the depth factor; kernel sizes and the
    Upscale/RMS layout are invariant.
    """
    name = None
    if isinstance(variant, str):
        try:
            w, d = VARIANTS[variant.upper()]
        except KeyError:
            raise ValueError(f"unknown variant {variant!r}, expected one of {sorted(VARIANTS)}")
        name = variant.upper()
    else:
        w, d = variant
    if w <= 0 or d <= 0:
        raise ValueError(f"scaling factors must be positive, got w={w}, d={d}")

    def scale(st: StageSpec) -> StageSpec:
        if st.kind == "head":
            return st
        f = round_filters(st.f, w)
        r = round_repeats(st.r, d) if st.kind == "mirse" else st.r
        return StageSpec(st.kind, st.k, f, r, st.stride2, st.d, st.ratio, st.s)

    spec = NetworkSpec(
        encoder=tuple(scale(st) for st in _ENCODER_TABLE),
        decoder=tuple(scale(st) for st in _DECODER_TABLE),
        skips=_SKIPS,
        w=w,
        d=d,
        variant=name,
    )
    for _ in _decoder_walk(spec):  # validates channel bookkeeping
        pass
    return spec


# ------------------------------------------------------------------ walks


@dataclass(frozen=True)
class _MirseRep:
    """Channel bookkeeping for one MIRSE repetition."""

    path: str
    c_in: int
    c_out: int
    k: int
    stride: int
    ratio: int
    s: float

    @property
    def c_exp(self) -> int:
        return self.c_in * self.ratio

    @property
    def c_se(self) -> int:
        # squeeze width is set by the pre-expansion channel count
        return max(1, round(self.s * self.c_in))


def _mirse_reps(path: str, c_in: int, st: StageSpec) -> list[_MirseRep]:
    reps = []
    for j in range(st.r):
        stride = 2 if st.stride2 and j == 0 else 1
        reps.append(_MirseRep(f"{path}.r{j}", c_in, st.f, st.k, stride, st.ratio, st.s))
        c_in = st.f
    return reps


def _encoder_walk(spec: NetworkSpec):
    """Yields (path, stage, in_channels, encoder_index)."""
    c = spec.in_channels
    for i, st in enumerate(spec.encoder):
        path = "encoder.stem" if st.kind == "stem" else f"encoder.s{i}"
        yield path, st, c, i
        c = st.f


def _decoder_walk(spec: NetworkSpec):
    """Yields (path, stage, in_channels, skip encoder index or None)."""
    skip_at = {dec: enc for enc, dec in spec.skips}
    c = spec.encoder[-1].f
    for idx, st in enumerate(spec.decoder):
        enc = skip_at.get(idx) if st.kind == "upscale" else None
        path = "head" if st.kind == "head" else f"decoder.d{idx:02d}_{_PATH_TAG[st.kind]}"
        if st.kind in ("upscale", "rms") and c != st.f:
            raise ValueError(f"{path} expects {st.f} channels but receives {c}")
        yield path, st, c, enc
        c = st.f
        if enc is not None:
            c += spec.encoder[enc].f


# ----------------------------------------------------------- enumeration


def _bn_entries(prefix: str, c: int):
    for part in ("gamma", "beta", "mean", "var"):
        yield f"{prefix}.bn.{part}", (c,)


def block_entries(st: StageSpec, c_in: int, path: str):
    """(name, shape) pairs for one stage, in forward order."""
    if st.kind == "stem":
        yield f"{path}.conv", (st.f, c_in, st.k, st.k)
        yield from _bn_entries(path, st.f)
    elif st.kind == "mirse":
        for rep in _mirse_reps(path, c_in, st):
            p = rep.path
            if rep.ratio != 1:
                yield f"{p}.expand.conv", (rep.c_exp, rep.c_in, 1, 1)
                yield from _bn_entries(f"{p}.expand", rep.c_exp)
            yield f"{p}.dw.conv", (rep.c_exp, 1, rep.k, rep.k)
            yield from _bn_entries(f"{p}.dw", rep.c_exp)
            yield f"{p}.se.reduce.conv", (rep.c_se, rep.c_exp, 1, 1)
            yield f"{p}.se.reduce.bias", (rep.c_se,)
            yield f"{p}.se.expand.conv", (rep.c_exp, rep.c_se, 1, 1)
            yield f"{p}.se.expand.bias", (rep.c_exp,)
            yield f"{p}.project.conv", (rep.c_out, rep.c_exp, 1, 1)
            yield from _bn_entries(f"{p}.project", rep.c_out)
    elif st.kind == "upscale":
        yield f"{path}.conv", (c_in, st.f, 3, 3)
        yield f"{path}.bias", (st.f,)
    elif st.kind == "rms":
        for i in range(4):
            yield f"{path}.b{i}.conv", (st.f, st.f, st.k[i], st.k[i])
            yield from _bn_entries(f"{path}.b{i}", st.f)
        yield f"{path}.combine.conv", (st.f, 4 * st.f, 1, 1)
        yield from _bn_entries(f"{path}.combine", st.f)
    elif st.kind == "head":
        yield f"{path}.conv", (st.f, c_in, st.k, st.k)
        yield f"{path}.bias", (st.f,)


def iter_layers(spec: NetworkSpec):
    """Every parameter tensor of the network as (name, shape), fixed order."""
    for path, st, c_in, _ in _encoder_walk(spec):
        yield from block_entries(st, c_in, path)
    for path, st, c_in, _ in _decoder_walk(spec):
        yield from block_entries(st, c_in, path)


def count_parameters(spec: NetworkSpec) -> int:
    """Trainable parameters: conv weights and biases plus BN affine terms.
    Running statistics are carried in checkpoints but not counted."""
    total = 0
    for name, shape in iter_layers(spec):
        if name.endswith((".bn.mean", ".bn.var")):
            continue
        total += math.prod(shape)
    return total


@dataclass
class Weights:
    """Name-addressed parameter tensors for one NetworkSpec."""

    spec: NetworkSpec
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.tensors[name]
        except KeyError:
            raise KeyError(f"weights are missing layer {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self.tensors


def init_weights(spec: NetworkSpec, seed: int = 0) -> Weights:
    """Deterministic fan-in uniform init for convs, identity stats for BN."""
    # second key word namespaces these draws away from other Philox streams
    rng = np.random.Generator(np.random.Philox(key=[seed & (2**64 - 1), 0x57454947]))
    tensors = {}
    for name, shape in iter_layers(spec):
        if name.endswith(".conv"):
            fan_in = math.prod(shape[1:])
            bound = math.sqrt(6.0 / fan_in)
            t = rng.uniform(-bound, bound, size=shape).astype(np.float32)
        elif name.endswith((".bn.gamma", ".bn.var")):
            t = np.ones(shape, dtype=np.float32)
        else:  # biases, bn.beta, bn.mean
            t = np.zeros(shape, dtype=np.float32)
        tensors[name] = t
    return Weights(spec, tensors)


# -------------------------------------------------------------- forward


def _check_finite(x: np.ndarray, path: str) -> None:
    if not np.isfinite(x).all():
        raise FloatingPointError(f"non-finite values after {path}")


def _bn(x, weights, prefix):
    return batchnorm_infer(
        x,
        weights[f"{prefix}.bn.gamma"],
        weights[f"{prefix}.bn.beta"],
        weights[f"{prefix}.bn.mean"],
        weights[f"{prefix}.bn.var"],
    )


def _conv_bn_swish(x, weights, prefix, *, stride=1, dilation=1, groups=1, pool=None):
    y = conv2d(x, weights[f"{prefix}.conv"], stride=stride, dilation=dilation,
               groups=groups, pool=pool)
    return swish(_bn(y, weights, prefix))


def mirse_forward(x, st: StageSpec, weights, *, path: str = "mirse", pool=None):
    """Chain of R inverted-residual repetitions with squeeze-excite gating."""
    for rep in _mirse_reps(path, x.shape[0], st):
        h = x
        if rep.ratio != 1:
            h = _conv_bn_swish(h, weights, f"{rep.path}.expand", pool=pool)
        h = _conv_bn_swish(h, weights, f"{rep.path}.dw", stride=rep.stride,
                           groups=rep.c_exp, pool=pool)
        h = squeeze_excite(
            h,
            weights[f"{rep.path}.se.reduce.conv"].reshape(rep.c_se, rep.c_exp),
            weights[f"{rep.path}.se.reduce.bias"],
            weights[f"{rep.path}.se.expand.conv"].reshape(rep.c_exp, rep.c_se),
            weights[f"{rep.path}.se.expand.bias"],
        )
        h = _bn(conv2d(h, weights[f"{rep.path}.project.conv"], pool=pool),
                weights, f"{rep.path}.project")
        if rep.stride == 1 and rep.c_in == rep.c_out:
            h = h + x
        _check_finite(h, rep.path)
        x = h
    return x


def rms_forward(x, st: StageSpec, weights, *, path: str = "rms", pool=None):
    """Four parallel atrous branches, fused by a 1x1 conv, plus the input."""
    if x.shape[0] != st.f:
        raise ValueError(f"{path} expects {st.f} channels, got {x.shape[0]}")
    branches = [
        _conv_bn_swish(x, weights, f"{path}.b{i}", dilation=st.d[i], pool=pool)
        for i in range(4)
    ]
    h = _conv_bn_swish(np.concatenate(branches, axis=0), weights,
                       f"{path}.combine", pool=pool)
    h = h + x
    _check_finite(h, path)
    return h


def _stage_forward(x, st, weights, path, enc_feats, enc_idx, pool):
    if st.kind == "stem":
        h = _conv_bn_swish(x, weights, path, stride=2, pool=pool)
    elif st.kind == "mirse":
        return mirse_forward(x, st, weights, path=path, pool=pool)
    elif st.kind == "upscale":
        h = transposed_conv2d(x, weights[f"{path}.conv"], weights[f"{path}.bias"],
                              pool=pool)
        if enc_idx is not None:
            h = np.concatenate([h, enc_feats[enc_idx]], axis=0)
    elif st.kind == "rms":
        return rms_forward(x, st, weights, path=path, pool=pool)
    else:  # head
        h = sigmoid(conv2d(x, weights[f"{path}.conv"], weights[f"{path}.bias"],
                           pool=pool))
    _check_finite(h, path)
    return h


def network_forward(spec: NetworkSpec, weights, x: np.ndarray, threads: int = 1):
    """Run the full network on (C, H, W) or (N, C, H, W) input.

    H and W must be divisible by 32 so the five stride-2 reductions and five
    upscales land back on the input size. Results are bit-identical for any
    thread count.
    """
    x = np.asarray(x, dtype=np.float32)
    if x.ndim == 4:
        return np.stack([network_forward(spec, weights, xi, threads) for xi in x])
    if x.ndim != 3 or x.shape[0] != spec.in_channels:
        raise ValueError(
            f"expected ({spec.in_channels}, H, W) input, got shape {x.shape}"
        )
    h_in, w_in = x.shape[1:]
    if h_in % 32 or w_in % 32:
        raise ValueError(
            f"spatial dims must be divisible by 32, got {h_in}x{w_in}"
        )

    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        enc_feats = {}
        h = x
        for path, st, _, i in _encoder_walk(spec):
            h = _stage_forward(h, st, weights, path, None, None, pool)
            enc_feats[i] = h
        for path, st, _, enc in _decoder_walk(spec):
            h = _stage_forward(h, st, weights, path, enc_feats, enc, pool)
        return h
    finally:
        if pool is not None:
            pool.shutdown()
