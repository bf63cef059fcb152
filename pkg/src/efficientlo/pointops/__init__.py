"""Projection-aware point operators."""
from .grouping import (
    NeighborSet,
    distance_filter_select,
    group,
    group_all,
    kernel_group,
    mode_id,
)
from .layers import (
    CostVolumeConfig,
    CostVolumeStats,
    LevelConfig,
    UpconvConfig,
    aggregate,
    apply_mlp,
    attentive_cost_volume,
    glorot,
    init_cost_volume,
    init_mlp,
    set_conv,
    set_upconv,
    upconv_neighbors,
)
from .sampling import SampledSet, stride_sample

__all__ = [
    "CostVolumeConfig", "CostVolumeStats", "LevelConfig", "NeighborSet", "SampledSet",
    "UpconvConfig", "aggregate", "apply_mlp", "attentive_cost_volume", "distance_filter_select",
    "glorot", "group", "group_all", "init_cost_volume", "init_mlp", "kernel_group", "mode_id",
    "set_conv", "set_upconv", "stride_sample", "upconv_neighbors",
]
