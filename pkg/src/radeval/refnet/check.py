"""Seeded invariant suite for the reference blocks (backs ``radeval blocks-check``)."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable

import numpy as np

from radeval.errors import RadevalError
from radeval.refnet.backbone import BackboneConfig, backbone_forward, init_backbone, load_weights
from radeval.refnet.blocks import (
    ConvParams,
    CSPVariant,
    cbl_forward,
    csp_forward,
    focus_forward,
    focus_slice,
    focus_unslice,
    neutral_res_unit,
    random_csp,
    res_unit_forward,
    spp_forward,
    spp_pool,
    PANetParams,
    panet_concat,
    panet_fuse,
)
from radeval.refnet.ops import conv_output_size


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}" + (f": {self.detail}" if self.detail else "")


class InvariantFailure(AssertionError):
    pass


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise InvariantFailure(msg)


def _rand(rng, shape) -> np.ndarray:
    return rng.standard_normal(shape).astype(np.float32)


def check_cbl_shapes(rng, cfg: BackboneConfig) -> str:
    for _ in range(5):
        c_in, c_out = int(rng.integers(1, 6)), int(rng.integers(1, 9))
        k = int(rng.choice([1, 3, 5]))
        stride = int(rng.integers(1, 3))
        h, w = int(rng.integers(k, 12)), int(rng.integers(k, 12))
        p = ConvParams.random(rng, c_in, c_out, k, stride=stride, slope=cfg.slope, eps=cfg.eps)
        y = cbl_forward(_rand(rng, (cfg.batch, c_in, h, w)), p)
        want = (cfg.batch, c_out, conv_output_size(h, k, stride, k // 2), conv_output_size(w, k, stride, k // 2))
        _require(y.shape == want, f"CBL output {y.shape} != {want}")
    return "5 random shapes"


def check_focus_permutation(rng, cfg: BackboneConfig) -> str:
    n, c, s = cfg.batch, 3, cfg.input_size
    x = _rand(rng, (n, c, s, s))
    y = focus_slice(x)
    _require(y.shape == (n, 4 * c, s // 2, s // 2), f"Focus pre-conv shape {y.shape}")
    _require(np.array_equal(np.sort(x, axis=None), np.sort(y, axis=None)), "Focus is not a permutation")
    _require(np.array_equal(focus_unslice(y), x), "inverse interleave does not recover the input")
    p = ConvParams.random(rng, 4 * c, 8, 3, slope=cfg.slope, eps=cfg.eps)
    out = focus_forward(x, p)
    _require(out.shape == (n, 8, s // 2, s // 2), f"Focus output shape {out.shape}")
    return f"input {x.shape}"


def check_spp_constant(rng, cfg: BackboneConfig) -> str:
    n, c, s = cfg.batch, 4, max(2, cfg.input_size // 8)
    value = np.float32(rng.normal())
    x = np.full((n, c, s, s), value, dtype=np.float32)
    pooled = spp_pool(x)
    _require(pooled.shape == (n, 4 * c, s, s), f"SPP pre-projection shape {pooled.shape}")
    _require(bool(np.all(pooled == value)), "constant input did not stay constant")
    x = _rand(rng, (n, c, s, s))
    pooled = spp_pool(x)
    _require(np.array_equal(pooled[:, :c], x), "1x1 branch is not the identity")
    _require(bool(np.all(pooled[:, c:] >= np.tile(x, (1, 3, 1, 1)))), "max-pool below input")
    out = spp_forward(x, ConvParams.random(rng, 4 * c, c, 1, slope=cfg.slope, eps=cfg.eps))
    _require(out.shape == (n, c, s, s), f"SPP output shape {out.shape}")
    return f"constant {float(value):.6g}"


def check_res_identity(rng, cfg: BackboneConfig) -> str:
    c, s = 4, max(2, cfg.input_size // 8)
    x = _rand(rng, (cfg.batch, c, s, s))
    _require(np.array_equal(res_unit_forward(x, neutral_res_unit(c)), x), "zero-weight Res unit is not the identity")
    return ""


def check_csp_shapes(rng, cfg: BackboneConfig) -> str:
    s = max(2, cfg.input_size // 8)
    for variant in CSPVariant:
        for depth in (1, 2):
            c_in, c_out = int(rng.integers(2, 9)), 2 * int(rng.integers(1, 5))
            p = random_csp(rng, c_in, c_out, depth, slope=cfg.slope, eps=cfg.eps)
            y = csp_forward(_rand(rng, (cfg.batch, c_in, s, s)), variant, p)
            _require(y.shape == (cfg.batch, c_out, s, s), f"{variant.value} X={depth} shape {y.shape}")
    return ""


def check_panet_shapes(rng, cfg: BackboneConfig) -> str:
    s = max(2, cfg.input_size // 16)
    c_low, c_high, c_down, c_out = 4, 6, 5, 7
    p = PANetParams(ConvParams.random(rng, c_low, c_down, 3, stride=2),
                    ConvParams.random(rng, c_down + c_high, c_out, 1))
    lo, hi = _rand(rng, (cfg.batch, c_low, 2 * s, 2 * s)), _rand(rng, (cfg.batch, c_high, s, s))
    _require(panet_concat(hi, lo, p).shape[1] == c_down + c_high, "PANet concat channels")
    _require(panet_fuse(hi, lo, p).shape == (cfg.batch, c_out, s, s), "PANet output shape")
    return ""


def check_backbone_strides(rng, cfg: BackboneConfig) -> str:
    params = (load_weights(cfg.weights, cfg) if cfg.weights
              else init_backbone(cfg, seed=int(rng.integers(2**31))))
    s = cfg.input_size
    x = rng.uniform(0.0, 1.0, (cfg.batch, 3, s, s)).astype(np.float32)
    feats = backbone_forward(x, params)
    for f, stride, c in zip(feats, (8, 16, 32), cfg.widths[2:]):
        want = (cfg.batch, c, s // stride, s // stride)
        _require(f.shape == want, f"stride-{stride} map {f.shape} != {want}")
    again = backbone_forward(x, params)
    _require(all(np.array_equal(a, b) for a, b in zip(feats, again)), "backbone is not deterministic")
    digest = hashlib.sha256(b"".join(f.tobytes() for f in feats)).hexdigest()[:16]
    return " ".join(str(f.shape[2:]) for f in feats) + f" sha256:{digest}"


CHECKS: list[tuple[str, Callable]] = [
    ("cbl_shapes", check_cbl_shapes),
    ("focus_permutation", check_focus_permutation),
    ("spp_constant", check_spp_constant),
    ("res_identity", check_res_identity),
    ("csp_shapes", check_csp_shapes),
    ("panet_shapes", check_panet_shapes),
    ("backbone_strides", check_backbone_strides),
]


def run_checks(seed: int, cfg: BackboneConfig) -> list[CheckResult]:
    """Run every invariant with its own seeded generator; failures never abort the suite."""
    results = []
    for k, (name, fn) in enumerate(CHECKS):
        rng = np.random.default_rng([seed, k])
        try:
            results.append(CheckResult(name, True, fn(rng, cfg)))
        except (InvariantFailure, RadevalError) as exc:
            results.append(CheckResult(name, False, f"{type(exc).__name__}: {exc}"))
    return results
