"""Data I/O, synthetic scenes, training, inference, metrics and benchmarks."""
from .bench import BenchConfig, bench_grouping, summarize, write_bench_csv
from .config import RunConfig, dumps, load_config, loads, save_config
from .io import (
    accumulate,
    load_calib_extrinsic,
    load_poses,
    load_scan,
    relative_pose,
    relative_poses,
    to_lidar_frame,
    write_poses,
    write_scan,
)
from .metrics import MetricsReport, ate, ate_rpe, evaluate, kitti_errors, kitti_metrics, rpe, umeyama
from .synth import SynthConfig, SynthPair, synth_scene
from .train import (
    InferenceResult,
    Pair,
    TrainConfig,
    Trainer,
    TrainResult,
    infer_sequence,
    load_network,
    pose_errors,
    sequence_pairs,
    synthetic_pairs,
    train,
)

__all__ = [
    "BenchConfig", "InferenceResult", "MetricsReport", "Pair", "RunConfig", "SynthConfig",
    "SynthPair", "TrainConfig", "TrainResult", "Trainer", "accumulate", "ate", "ate_rpe",
    "bench_grouping", "dumps", "evaluate", "infer_sequence", "kitti_errors", "kitti_metrics",
    "load_calib_extrinsic", "load_config", "load_network", "load_poses", "load_scan", "loads",
    "pose_errors", "relative_pose", "relative_poses", "rpe", "save_config", "sequence_pairs",
    "summarize", "synth_scene", "synthetic_pairs", "to_lidar_frame", "train", "umeyama",
    "write_bench_csv", "write_poses", "write_scan",
]
