"""Kernel backend selection.

The compiled core (``_ckernels``) is used when it imports; otherwise the
numpy fallback runs. ``EFLO_BACKEND=python`` forces the fallback. Both give
identical outputs.
"""
import os

from . import _pykernels

MODE_RANDOM = _pykernels.MODE_RANDOM
MODE_KNN = _pykernels.MODE_KNN

_compiled = None
if os.environ.get("EFLO_BACKEND", "").lower() != "python":
    try:
        from . import _ckernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"


def num_threads() -> int:
    try:
        return max(1, int(os.environ.get("EFLO_NUM_THREADS", "1")))
    except ValueError:
        return 1


def get_backend(name: str | None = None):
    """Return the kernel module for ``name`` ('compiled', 'python' or None for active)."""
    name = name or BACKEND
    if name == "python":
        return _PyBackend
    if name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available (extension not built)")
        return _CBackend
    raise ValueError(f"unknown backend {name!r}")


class _PyBackend:
    name = "python"

    @staticmethod
    def scatter_min_range(cells, ranges, ncells):
        return _pykernels.scatter_min_range(cells, ranges, ncells)

    @staticmethod
    def window_group(coords, valid, center_rc, center_xyz, kh, kw, radius, K, mode, seed, stream):
        return _pykernels.window_group(
            coords, valid, center_rc, center_xyz, kh, kw, radius, K, mode, seed, stream
        )

    @staticmethod
    def full_group(points, point_ids, center_xyz, radius, K, mode, seed, stream):
        return _pykernels.full_group(points, point_ids, center_xyz, radius, K, mode, seed, stream)


class _CBackend:
    name = "compiled"

    @staticmethod
    def scatter_min_range(cells, ranges, ncells):
        import numpy as np

        return _compiled.scatter_min_range(
            np.ascontiguousarray(cells, dtype=np.int64),
            np.ascontiguousarray(ranges, dtype=np.float64),
            ncells,
        )

    @staticmethod
    def window_group(coords, valid, center_rc, center_xyz, kh, kw, radius, K, mode, seed, stream):
        return _compiled.window_group(
            coords, valid, center_rc, center_xyz, kh, kw, float(radius), K, mode,
            seed, stream, num_threads(),
        )

    @staticmethod
    def full_group(points, point_ids, center_xyz, radius, K, mode, seed, stream):
        return _compiled.full_group(
            points, point_ids, center_xyz, float(radius), K, mode, seed, stream, num_threads()
        )


def scatter_min_range(cells, ranges, ncells):
    return get_backend().scatter_min_range(cells, ranges, ncells)


def window_group(coords, valid, center_rc, center_xyz, kh, kw, radius, K, mode, seed=0, stream=0):
    return get_backend().window_group(
        coords, valid, center_rc, center_xyz, kh, kw, radius, K, mode, seed, stream
    )


def full_group(points, point_ids, center_xyz, radius, K, mode, seed=0, stream=0):
    return get_backend().full_group(points, point_ids, center_xyz, radius, K, mode, seed, stream)
