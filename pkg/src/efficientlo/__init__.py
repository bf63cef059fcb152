"""Projection-aware LiDAR odometry: operators, network, and evaluation harness."""

__version__ = "0.1.0"
