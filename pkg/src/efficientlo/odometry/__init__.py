"""The pose-regression network and its training loss."""
from .config import NetworkConfig, toy_config
from .loss import canonical_q_gt, level_loss, total_loss
from .network import (
    EfficientLONet,
    ForwardResult,
    LevelState,
    PyramidLevel,
    compose,
    normalize_quat,
    pose_warp_level,
    warp_points,
)

__all__ = [
    "EfficientLONet", "ForwardResult", "LevelState", "NetworkConfig", "PyramidLevel",
    "canonical_q_gt", "compose", "level_loss", "normalize_quat", "pose_warp_level",
    "toy_config", "total_loss", "warp_points",
]
