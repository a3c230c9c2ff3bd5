"""Tensor primitives for CPU inference.

Tensors are channels-first float32 numpy arrays (C, H, W). All spatial ops
use "same" zero padding, so output size is ceil(input / stride).

Heavy ops split their work over a fixed grid of output-row chunks. The grid
depends only on the output height, never on the worker count, and every
output element is produced by exactly one chunk, so results are bit-identical
whether chunks run serially or on a thread pool.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "conv2d",
    "transposed_conv2d",
    "batchnorm_infer",
    "sigmoid",
    "swish",
    "squeeze_excite",
]

_MAX_CHUNKS = 8


def _row_chunks(h_out: int) -> list[tuple[int, int]]:
    n = min(_MAX_CHUNKS, h_out)
    edges = [h_out * i // n for i in range(n + 1)]
    return [(edges[i], edges[i + 1]) for i in range(n)]


def _run_chunks(jobs, pool) -> None:
    if pool is None:
        for job in jobs:
            job()
    else:
        for f in [pool.submit(job) for job in jobs]:
            f.result()


def conv2d(
    x: np.ndarray,
    weight: np.ndarray,
    bias: np.ndarray | None = None,
    stride: int = 1,
    dilation: int = 1,
    groups: int = 1,
    pool=None,
) -> np.ndarray:
    """Cross-correlation with "same" zero padding.

    Args:
        x: (C_in, H, W) float32.
        weight: (C_out, C_in / groups, K, K) float32, K odd.
        bias: optional (C_out,), added after accumulation.
        stride: spatial stride.
        dilation: tap spacing; padding grows to dilation * (K - 1) / 2 so the
            output stays at ceil(input / stride).
        groups: channel groups; C_in == C_out == groups gives depthwise.
        pool: optional executor for the row-chunk grid.

    Returns:
        (C_out, ceil(H / stride), ceil(W / stride)) float32.
    """
    c_in, h, w = x.shape
    c_out, c_in_g, kh, kw = weight.shape
    if kh != kw or kh % 2 == 0:
        raise ValueError(f"kernel must be square and odd, got {kh}x{kw}")
    if c_in % groups or c_out % groups:
        raise ValueError(f"channels ({c_in} -> {c_out}) not divisible by groups={groups}")
    if c_in_g != c_in // groups:
        raise ValueError(
            f"kernel expects {c_in_g} channels per group, input has {c_in // groups}"
        )
    k = kh
    pad = dilation * (k - 1) // 2
    h_out = -(-h // stride)
    w_out = -(-w // stride)
    xp = x if pad == 0 else np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    out = np.empty((c_out, h_out, w_out), dtype=np.float32)
    cg_in = c_in // groups
    cg_out = c_out // groups

    depthwise = groups == c_in and c_in == c_out and cg_in == 1
    taps = [(ki, kj) for ki in range(k) for kj in range(k)]

    def chunk_job(r0, r1):
        def run():
            acc = np.zeros((c_out, r1 - r0, w_out), dtype=np.float32)
            for ki, kj in taps:
                rows = slice(ki * dilation + r0 * stride,
                             ki * dilation + (r1 - 1) * stride + 1, stride)
                cols = slice(kj * dilation, kj * dilation + (w_out - 1) * stride + 1, stride)
                sl = xp[:, rows, cols]
                if depthwise:
                    acc += weight[:, 0, ki, kj][:, None, None] * sl
                elif groups == 1:
                    acc += (weight[:, :, ki, kj] @ sl.reshape(c_in, -1)).reshape(acc.shape)
                else:
                    for g in range(groups):
                        wg = weight[g * cg_out : (g + 1) * cg_out, :, ki, kj]
                        sg = sl[g * cg_in : (g + 1) * cg_in].reshape(cg_in, -1)
                        acc[g * cg_out : (g + 1) * cg_out] += (wg @ sg).reshape(
                            cg_out, r1 - r0, w_out
                        )
            if bias is not None:
                acc += bias[:, None, None].astype(np.float32)
            out[:, r0:r1] = acc
        return run

    _run_chunks([chunk_job(r0, r1) for r0, r1 in _row_chunks(h_out)], pool)
    return out


def transposed_conv2d(
    x: np.ndarray,
    weight: np.ndarray,
    bias: np.ndarray | None = None,
    pool=None,
) -> np.ndarray:
    """Stride-2 transposed convolution that exactly doubles spatial size.

    Equivalent to the adjoint of conv2d(stride=2, same padding) with the same
    3x3 kernel: the input is zero-stuffed, padded 1 on the leading edges and
    2 on the trailing edges, and convolved with the spatially flipped,
    channel-swapped kernel.

    Args:
        x: (C_in, H, W) float32.
        weight: (C_in, C_out, 3, 3) float32.
        bias: optional (C_out,).

    Returns:
        (C_out, 2H, 2W) float32.
    """
    c_in, h, w = x.shape
    wc_in, c_out, kh, kw = weight.shape
    if wc_in != c_in:
        raise ValueError(f"kernel expects {wc_in} input channels, got {c_in}")
    if (kh, kw) != (3, 3):
        raise ValueError(f"upscale kernel must be 3x3, got {kh}x{kw}")
    # conv-form kernel: swap channel axes and flip spatially
    wk = weight.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1]
    stuffed = np.zeros((c_in, 2 * h + 2, 2 * w + 2), dtype=np.float32)
    stuffed[:, 1 : 2 * h : 2, 1 : 2 * w : 2] = x  # pad 1 leading, 2 trailing
    h_out, w_out = 2 * h, 2 * w
    out = np.empty((c_out, h_out, w_out), dtype=np.float32)

    def chunk_job(r0, r1):
        def run():
            acc = np.zeros((c_out, r1 - r0, w_out), dtype=np.float32)
            for ki in range(3):
                for kj in range(3):
                    sl = stuffed[:, ki + r0 : ki + r1, kj : kj + w_out]
                    acc += (wk[:, :, ki, kj] @ sl.reshape(c_in, -1)).reshape(acc.shape)
            if bias is not None:
                acc += bias[:, None, None].astype(np.float32)
            out[:, r0:r1] = acc
        return run

    _run_chunks([chunk_job(r0, r1) for r0, r1 in _row_chunks(h_out)], pool)
    return out


def batchnorm_infer(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    eps: float = 1e-3,
) -> np.ndarray:
    """Per-channel normalization with stored statistics."""
    if np.any(running_var < 0):
        raise ValueError("negative running variance")
    scale = (gamma / np.sqrt(running_var + eps)).astype(np.float32)
    shift = (beta - running_mean * scale).astype(np.float32)
    return x * scale[:, None, None] + shift[:, None, None]


def sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form stays finite for any input magnitude
    return (0.5 * (1.0 + np.tanh(0.5 * x))).astype(np.float32)


def swish(x: np.ndarray) -> np.ndarray:
    return (x * sigmoid(x)).astype(np.float32)


def squeeze_excite(
    x: np.ndarray,
    w_reduce: np.ndarray,
    b_reduce: np.ndarray,
    w_expand: np.ndarray,
    b_expand: np.ndarray,
) -> np.ndarray:
    """Channel gating from globally pooled features.

    Pool each channel to a scalar, squeeze through a small fully connected
    pair (swish between, sigmoid after), and scale the input channel-wise.

    Args:
        x: (C, H, W).
        w_reduce: (C_r, C); b_reduce: (C_r,).
        w_expand: (C, C_r); b_expand: (C,).
    """
    c = x.shape[0]
    if w_reduce.shape[1] != c or w_expand.shape[0] != c:
        raise ValueError("squeeze-excite weight shapes do not match input channels")
    pooled = x.mean(axis=(1, 2), dtype=np.float32)
    hidden = swish(w_reduce @ pooled + b_reduce)
    gate = sigmoid(w_expand @ hidden + b_expand)
    return x * gate[:, None, None]
