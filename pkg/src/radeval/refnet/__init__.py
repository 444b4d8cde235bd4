"""Forward-only reference implementations of the YOLOv5 building blocks."""

from radeval.refnet.backbone import (
    BackboneConfig,
    BackboneParams,
    backbone_forward,
    init_backbone,
    load_weights,
    save_weights,
)
from radeval.refnet.blocks import (
    ConvParams,
    CSPParams,
    CSPVariant,
    PANetParams,
    ResUnitParams,
    cbl_forward,
    csp_forward,
    focus_forward,
    focus_slice,
    focus_unslice,
    panet_fuse,
    res_unit_forward,
    spp_forward,
    spp_pool,
)

__all__ = [
    "BackboneConfig", "BackboneParams", "backbone_forward", "init_backbone", "load_weights",
    "save_weights", "ConvParams", "CSPParams", "CSPVariant", "PANetParams", "ResUnitParams",
    "cbl_forward", "csp_forward", "focus_forward", "focus_slice", "focus_unslice", "panet_fuse",
    "res_unit_forward", "spp_forward", "spp_pool",
]
