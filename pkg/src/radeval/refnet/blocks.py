"""Forward-only YOLOv5 building blocks: CBL, Res unit, CSP, Focus, SPP, PANet fusion."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from radeval.errors import ContractError
from radeval.refnet.ops import DTYPE, as_tensor, batch_norm, conv2d, leaky_relu, max_pool_same

LEAKY_SLOPE = 0.1
BN_EPS = 1e-5
SPP_KERNELS = (1, 5, 9, 13)


@dataclass
class ConvParams:
    """Convolution kernel plus batch-norm statistics for one CBL layer."""

    weight: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    stride: int = 1
    padding: Optional[int] = None
    slope: float = LEAKY_SLOPE
    eps: float = BN_EPS

    def __post_init__(self) -> None:
        self.weight = np.asarray(self.weight, dtype=DTYPE)
        if self.weight.ndim != 4 or self.weight.shape[2] != self.weight.shape[3]:
            raise ContractError(f"kernel must be (C_out, C_in, k, k), got {self.weight.shape}")
        if self.kernel % 2 != 1:
            raise ContractError(f"kernel size must be odd, got {self.kernel}")
        if self.padding is None:
            self.padding = self.kernel // 2
        for name in ("gamma", "beta", "mean", "var"):
            v = np.asarray(getattr(self, name), dtype=DTYPE)
            if v.shape != (self.c_out,):
                raise ContractError(f"BN {name} must have shape ({self.c_out},), got {v.shape}")
            setattr(self, name, v)
        if not np.all(self.var > 0):
            raise ContractError("BN variance must be positive")

    @property
    def c_out(self) -> int:
        return self.weight.shape[0]

    @property
    def c_in(self) -> int:
        return self.weight.shape[1]

    @property
    def kernel(self) -> int:
        return self.weight.shape[2]

    @classmethod
    def neutral(cls, weight, stride: int = 1, **kw) -> "ConvParams":
        """BN with gamma 1, beta 0, mean 0, var 1 around the given kernel."""
        weight = np.asarray(weight, dtype=DTYPE)
        c = weight.shape[0]
        return cls(weight, np.ones(c), np.zeros(c), np.zeros(c), np.ones(c), stride=stride, **kw)

    @classmethod
    def zeros(cls, c_in: int, c_out: int, k: int = 1, stride: int = 1, **kw) -> "ConvParams":
        return cls.neutral(np.zeros((c_out, c_in, k, k)), stride=stride, **kw)

    @classmethod
    def random(cls, rng: np.random.Generator, c_in: int, c_out: int, k: int = 1,
               stride: int = 1, **kw) -> "ConvParams":
        fan_in = c_in * k * k
        weight = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(c_out, c_in, k, k))
        return cls(
            weight,
            gamma=rng.uniform(0.5, 1.5, c_out),
            beta=rng.normal(0.0, 0.1, c_out),
            mean=rng.normal(0.0, 0.1, c_out),
            var=rng.uniform(0.5, 1.5, c_out),
            stride=stride,
            **kw,
        )


def cbl_forward(x, p: ConvParams) -> np.ndarray:
    """Conv -> BatchNorm -> LeakyReLU."""
    y = conv2d(x, p.weight, p.stride, p.padding)
    return leaky_relu(batch_norm(y, p.gamma, p.beta, p.mean, p.var, p.eps), p.slope)


@dataclass
class ResUnitParams:
    reduce: ConvParams  # 1x1
    expand: ConvParams  # 3x3


def _bottleneck(x: np.ndarray, p: ResUnitParams) -> np.ndarray:
    return cbl_forward(cbl_forward(x, p.reduce), p.expand)


def res_unit_forward(x, p: ResUnitParams) -> np.ndarray:
    x = as_tensor(x)
    y = _bottleneck(x, p)
    if y.shape != x.shape:
        raise ContractError(f"residual inner path changed shape {x.shape} -> {y.shape}")
    return x + y


class CSPVariant(enum.Enum):
    CSP1 = "CSP1_X"  # X residual units
    CSP2 = "CSP2_X"  # X unit pairs without the residual add


@dataclass
class CSPParams:
    stem: ConvParams             # CBL feeding the unit chain
    units: list[ResUnitParams]
    shortcut: np.ndarray         # plain 1x1 conv kernel
    fuse: ConvParams             # CBL over concat(chain, shortcut)


def csp_forward(x, variant: CSPVariant, p: CSPParams) -> np.ndarray:
    x = as_tensor(x)
    if len(p.units) < 1:
        raise ContractError("a CSP block needs X >= 1 units")
    a = cbl_forward(x, p.stem)
    for unit in p.units:
        a = res_unit_forward(a, unit) if variant is CSPVariant.CSP1 else _bottleneck(a, unit)
    b = conv2d(x, p.shortcut)
    if a.shape[2:] != b.shape[2:]:
        raise ContractError(f"CSP paths disagree spatially: {a.shape} vs {b.shape}")
    cat = np.concatenate([a, b], axis=1)
    if cat.shape[1] != p.fuse.c_in:
        raise ContractError(f"CSP fuse expects {p.fuse.c_in} channels, concat has {cat.shape[1]}")
    return cbl_forward(cat, p.fuse)


def focus_slice(x) -> np.ndarray:
    """Space-to-depth by pixel parity: (N, C, H, W) -> (N, 4C, H/2, W/2).

    Order: even-row/even-col, odd-row/even-col, even-row/odd-col, odd-row/odd-col.
    """
    x = as_tensor(x)
    h, w = x.shape[2:]
    if h % 2 or w % 2:
        raise ContractError(f"Focus needs even spatial dims, got {h}x{w}")
    return np.concatenate(
        [x[..., ::2, ::2], x[..., 1::2, ::2], x[..., ::2, 1::2], x[..., 1::2, 1::2]], axis=1
    )


def focus_unslice(y) -> np.ndarray:
    """Inverse of :func:`focus_slice`."""
    y = as_tensor(y)
    n, c4, h2, w2 = y.shape
    if c4 % 4:
        raise ContractError(f"channel count {c4} is not a multiple of 4")
    c = c4 // 4
    x = np.empty((n, c, 2 * h2, 2 * w2), dtype=y.dtype)
    x[..., ::2, ::2] = y[:, :c]
    x[..., 1::2, ::2] = y[:, c:2 * c]
    x[..., ::2, 1::2] = y[:, 2 * c:3 * c]
    x[..., 1::2, 1::2] = y[:, 3 * c:]
    return x


def focus_forward(x, p: ConvParams) -> np.ndarray:
    return cbl_forward(focus_slice(x), p)


def spp_pool(x, kernels=SPP_KERNELS) -> np.ndarray:
    """Concatenated same-size max pools, (N, C, H, W) -> (N, len(kernels)*C, H, W)."""
    x = as_tensor(x)
    return np.concatenate([max_pool_same(x, k) for k in kernels], axis=1)


def spp_forward(x, p: ConvParams) -> np.ndarray:
    return cbl_forward(spp_pool(x), p)


@dataclass
class PANetParams:
    down: ConvParams     # 3x3 stride-2 CBL on the finer level
    project: ConvParams  # CBL over concat(down(p_low), p_high)


def panet_concat(p_high, p_low, p: PANetParams) -> np.ndarray:
    p_high, p_low = as_tensor(p_high), as_tensor(p_low)
    hh, wh = p_high.shape[2:]
    hl, wl = p_low.shape[2:]
    if (hl, wl) != (2 * hh, 2 * wh):
        raise ContractError(f"pyramid levels not adjacent: low {hl}x{wl} vs high {hh}x{wh}")
    down = cbl_forward(p_low, p.down)
    if down.shape[2:] != p_high.shape[2:]:
        raise ContractError(f"downsampled level is {down.shape[2:]}, expected {(hh, wh)}")
    return np.concatenate([down, p_high], axis=1)


def panet_fuse(p_high, p_low, p: PANetParams) -> np.ndarray:
    """Bottom-up fusion: downsample the finer level and merge it into the coarser one."""
    return cbl_forward(panet_concat(p_high, p_low, p), p.project)


def neutral_res_unit(c: int, hidden: Optional[int] = None) -> ResUnitParams:
    hidden = hidden or c
    return ResUnitParams(ConvParams.zeros(c, hidden, 1), ConvParams.zeros(hidden, c, 3))


def random_res_unit(rng, c: int, hidden: Optional[int] = None, **kw) -> ResUnitParams:
    hidden = hidden or c
    return ResUnitParams(ConvParams.random(rng, c, hidden, 1, **kw),
                         ConvParams.random(rng, hidden, c, 3, **kw))


def random_csp(rng, c_in: int, c_out: int, depth: int, **kw) -> CSPParams:
    hidden = max(1, c_out // 2)
    return CSPParams(
        stem=ConvParams.random(rng, c_in, hidden, 1, **kw),
        units=[random_res_unit(rng, hidden, **kw) for _ in range(depth)],
        shortcut=rng.normal(0.0, np.sqrt(2.0 / c_in), size=(hidden, c_in, 1, 1)).astype(DTYPE),
        fuse=ConvParams.random(rng, 2 * hidden, c_out, 1, **kw),
    )
