"""Array primitives for the reference blocks.

Tensors are ``(N, C, H, W)`` float32 arrays. Convolution accumulates over
input channel, kernel row, kernel column in that fixed order using plain
elementwise arithmetic, so results are bit-identical across runs and
independent of BLAS threading.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from radeval.errors import ContractError

DTYPE = np.float32


def as_tensor(x) -> np.ndarray:
    x = np.asarray(x, dtype=DTYPE)
    if x.ndim != 4:
        raise ContractError(f"expected an (N, C, H, W) tensor, got shape {x.shape}")
    return x


def conv_output_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def conv2d(x: np.ndarray, weight: np.ndarray, stride: int = 1, padding: int = 0) -> np.ndarray:
    x = as_tensor(x)
    weight = np.asarray(weight, dtype=DTYPE)
    if weight.ndim != 4 or weight.shape[2] != weight.shape[3]:
        raise ContractError(f"kernel must be (C_out, C_in, k, k), got {weight.shape}")
    n, c_in, h, w = x.shape
    c_out, wc_in, k, _ = weight.shape
    if wc_in != c_in:
        raise ContractError(f"kernel expects {wc_in} input channels, tensor has {c_in}")
    if stride < 1 or padding < 0:
        raise ContractError(f"bad stride/padding {stride}/{padding}")
    ho = conv_output_size(h, k, stride, padding)
    wo = conv_output_size(w, k, stride, padding)
    if ho < 1 or wo < 1:
        raise ContractError(f"input {h}x{w} too small for kernel {k} with padding {padding}")

    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
    out = np.zeros((n, c_out, ho, wo), dtype=DTYPE)
    span_h = stride * (ho - 1) + 1
    span_w = stride * (wo - 1) + 1
    for ci in range(c_in):
        for kh in range(k):
            for kw in range(k):
                patch = xp[:, ci, kh:kh + span_h:stride, kw:kw + span_w:stride]
                out += weight[:, ci, kh, kw][None, :, None, None] * patch[:, None, :, :]
    return out


def batch_norm(x: np.ndarray, gamma, beta, mean, var, eps: float) -> np.ndarray:
    scale = (np.asarray(gamma, DTYPE) / np.sqrt(np.asarray(var, DTYPE) + DTYPE(eps))).astype(DTYPE)
    shift = (np.asarray(beta, DTYPE) - np.asarray(mean, DTYPE) * scale).astype(DTYPE)
    return x * scale[None, :, None, None] + shift[None, :, None, None]


def leaky_relu(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x >= 0, x, x * DTYPE(slope)).astype(DTYPE)


def max_pool_same(x: np.ndarray, k: int) -> np.ndarray:
    """Stride-1 max pool with ``k // 2`` padding so H and W are preserved."""
    x = as_tensor(x)
    if k < 1 or k % 2 == 0:
        raise ContractError(f"pool kernel must be odd and positive, got {k}")
    if k == 1:
        return x.copy()
    p = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)), constant_values=-np.inf)
    return sliding_window_view(xp, (k, k), axis=(2, 3)).max(axis=(-2, -1))
