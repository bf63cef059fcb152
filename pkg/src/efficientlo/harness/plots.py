"""Static SVG figures: XY trajectories and per-length drift bars."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_trajectory(path, gt, pred, plane: str = "xy") -> None:
    axes = {"xy": (0, 1), "xz": (0, 2)}[plane]
    fig, ax = plt.subplots(figsize=(5, 5))
    for traj, label, style in ((gt, "ground truth", "k-"), (pred, "estimate", "r--")):
        p = np.asarray(traj)[:, :3, 3]
        ax.plot(p[:, axes[0]], p[:, axes[1]], style, label=label, linewidth=1)
    ax.set_xlabel(f"{plane[0]} [m]")
    ax.set_ylabel(f"{plane[1]} [m]")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_length_errors(path, per_length: dict) -> None:
    """Bars of t_rel (%) and r_rel (deg/100 m) per subsequence length."""
    lengths = sorted(per_length)
    t = [per_length[L][0] for L in lengths]
    r = [per_length[L][1] for L in lengths]
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.5))
    a1.bar([str(L) for L in lengths], t, color="tab:blue")
    a1.set_xlabel("path length [m]")
    a1.set_ylabel("translation error [%]")
    a2.bar([str(L) for L in lengths], r, color="tab:orange")
    a2.set_xlabel("path length [m]")
    a2.set_ylabel("rotation error [deg/100 m]")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
