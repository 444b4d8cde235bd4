"""YOLOv5s-style backbone assembled from the reference blocks."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from radeval import tensorfile
from radeval.errors import ContractError, MalformedAnnotationError
from radeval.refnet.blocks import (
    BN_EPS,
    LEAKY_SLOPE,
    ConvParams,
    CSPParams,
    CSPVariant,
    cbl_forward,
    csp_forward,
    focus_forward,
    random_csp,
    spp_forward,
)
from radeval.refnet.ops import as_tensor

BACKBONE_STRIDE = 32


@dataclass(frozen=True)
class BackboneConfig:
    # Focus, stride-4, P3, P4, P5 channel widths
    widths: tuple[int, int, int, int, int] = (32, 64, 128, 256, 512)
    # CSP1_X depths of the stride-4, P3 and P4 stages
    depths: tuple[int, int, int] = (1, 3, 3)
    input_size: int = 64
    batch: int = 1
    slope: float = LEAKY_SLOPE
    eps: float = BN_EPS
    weights: Optional[str] = None

    def __post_init__(self) -> None:
        if len(self.widths) != 5 or any(w < 1 for w in self.widths):
            raise ContractError(f"widths must be 5 positive ints, got {self.widths}")
        if len(self.depths) != 3 or any(d < 1 for d in self.depths):
            raise ContractError(f"depths must be 3 ints >= 1, got {self.depths}")
        if self.batch < 1 or self.input_size < 1:
            raise ContractError("batch and input_size must be positive")

    @classmethod
    def from_json(cls, obj: dict) -> "BackboneConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise MalformedAnnotationError(f"unknown backbone config keys: {sorted(unknown)}")
        kw = dict(obj)
        for key in ("widths", "depths"):
            if key in kw:
                kw[key] = tuple(int(v) for v in kw[key])
        return cls(**kw)

    @classmethod
    def load(cls, path: str | Path) -> "BackboneConfig":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class BackboneParams:
    config: BackboneConfig
    focus: ConvParams
    downs: list[ConvParams]   # four stride-2 CBLs
    csps: list[CSPParams]     # three CSP1_X stages
    spp: ConvParams


def init_backbone(config: BackboneConfig, seed: int = 0) -> BackboneParams:
    rng = np.random.default_rng(seed)
    kw = {"slope": config.slope, "eps": config.eps}
    w = config.widths
    focus = ConvParams.random(rng, 12, w[0], 3, **kw)
    downs, csps = [], []
    for stage in range(4):
        downs.append(ConvParams.random(rng, w[stage], w[stage + 1], 3, stride=2, **kw))
        if stage < 3:
            csps.append(random_csp(rng, w[stage + 1], w[stage + 1], config.depths[stage], **kw))
    spp = ConvParams.random(rng, 4 * w[4], w[4], 1, **kw)
    return BackboneParams(config, focus, downs, csps, spp)


def backbone_forward(image, params: BackboneParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Run the backbone and return the stride 8/16/32 feature maps (P3, P4, P5)."""
    x = as_tensor(image)
    if x.shape[1] != 3:
        raise ContractError(f"backbone expects 3 input channels, got {x.shape[1]}")
    h, w = x.shape[2:]
    if h % BACKBONE_STRIDE or w % BACKBONE_STRIDE:
        raise ContractError(f"input {h}x{w} is not a multiple of {BACKBONE_STRIDE}")
    x = focus_forward(x, params.focus)
    feats = []
    for stage in range(4):
        x = cbl_forward(x, params.downs[stage])
        if stage < 3:
            x = csp_forward(x, CSPVariant.CSP1, params.csps[stage])
        if stage >= 1:
            feats.append(x)
    feats[-1] = spp_forward(feats[-1], params.spp)
    return feats[0], feats[1], feats[2]


_CONV_FIELDS = ("weight", "gamma", "beta", "mean", "var")


def _slots(params: BackboneParams) -> Iterator[tuple[str, object, str]]:
    """Yield ``(name, owner, attribute)`` for every array in the parameter tree."""
    def conv(prefix: str, p: ConvParams):
        for f in _CONV_FIELDS:
            yield f"{prefix}.{f}", p, f

    yield from conv("focus", params.focus)
    for i, d in enumerate(params.downs):
        yield from conv(f"down{i}", d)
    for i, c in enumerate(params.csps):
        yield from conv(f"csp{i}.stem", c.stem)
        for j, u in enumerate(c.units):
            yield from conv(f"csp{i}.unit{j}.reduce", u.reduce)
            yield from conv(f"csp{i}.unit{j}.expand", u.expand)
        yield f"csp{i}.shortcut", c, "shortcut"
        yield from conv(f"csp{i}.fuse", c.fuse)
    yield from conv("spp", params.spp)


def named_tensors(params: BackboneParams) -> dict[str, np.ndarray]:
    return {name: getattr(owner, attr) for name, owner, attr in _slots(params)}


def save_weights(path: str | Path, params: BackboneParams) -> None:
    cfg = dataclasses.asdict(params.config)
    cfg.pop("weights")
    tensorfile.save(path, named_tensors(params), {"backbone_config": cfg})


def load_weights(path: str | Path, config: BackboneConfig) -> BackboneParams:
    """Build the parameter tree for ``config`` and fill it from a tensor file."""
    tensors, _ = tensorfile.load(path)
    params = init_backbone(config)
    for name, owner, attr in _slots(params):
        if name not in tensors:
            raise MalformedAnnotationError(f"weights file lacks tensor {name!r}")
        arr = tensors[name]
        expected = getattr(owner, attr).shape
        if arr.shape != expected:
            raise MalformedAnnotationError(f"tensor {name!r} has shape {arr.shape}, expected {expected}")
        setattr(owner, attr, arr)
    for _, owner, _ in _slots(params):
        if isinstance(owner, ConvParams) and not np.all(owner.var > 0):
            raise MalformedAnnotationError("weights file holds non-positive BN variance")
    return params
