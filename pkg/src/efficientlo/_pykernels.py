"""Pure-numpy implementations of the hot grouping/projection kernels.

These must produce results identical to ``_ckernels.pyx``; the selection
procedure and the counter-based generator are shared by both.
"""
import numpy as np

MODE_RANDOM = 0
MODE_KNN = 1

_GOLD = np.uint64(0x9E3779B97F4A7C15)
_C1 = np.uint64(0xBF58476D1CE4E5B9)
_C2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S32 = np.uint64(32)
_ONE = np.uint64(1)


def mix64(z):
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):  # arithmetic is mod 2**64 by design
        z = (z ^ (z >> _S30)) * _C1
        z = (z ^ (z >> _S27)) * _C2
    return z ^ (z >> _S31)


def key64(a, b):
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64(a + (b + _ONE) * _GOLD)


def bounded(h, n):
    """Map 64-bit hashes to ``[0, n)`` by 32-bit multiply-shift."""
    return (((np.asarray(h, dtype=np.uint64) >> _S32) * np.asarray(n, dtype=np.uint64)) >> _S32).astype(
        np.int64
    )


def center_bases(seed, stream, n, first=0):
    stream_key = key64(np.uint64(seed), np.uint64(stream))
    return key64(stream_key, np.arange(first, first + n, dtype=np.uint64))


def window_offsets(kh, kw, W):
    hh = kh // 2
    if kw >= W:
        dc = np.arange(-(W // 2), W - W // 2, dtype=np.int64)
    else:
        hw = kw // 2
        dc = np.arange(-hw, hw + 1, dtype=np.int64)
    dr = np.arange(-hh, hh + 1, dtype=np.int64)
    return np.repeat(dr, dc.size), np.tile(dc, dr.size)


def scatter_min_range(cells, ranges, ncells):
    """Owner (input index) of each cell: smallest range, ties to lowest index."""
    cells = np.asarray(cells, dtype=np.int64)
    ranges = np.asarray(ranges, dtype=np.float64)
    owner = np.full(ncells, -1, dtype=np.int64)
    keep = np.flatnonzero(cells >= 0)
    if keep.size == 0:
        return owner
    order = np.lexsort((keep, ranges[keep], cells[keep]))
    sorted_idx = keep[order]
    sorted_cells = cells[sorted_idx]
    first = np.ones(sorted_idx.size, dtype=bool)
    first[1:] = sorted_cells[1:] != sorted_cells[:-1]
    owner[sorted_cells[first]] = sorted_idx[first]
    return owner


def _select(cand, d2, surv, K, mode, seed, stream, first=0):
    """Pick K entries per row among survivors; ``cand``/``d2``/``surv`` are (n, C)."""
    n, C = cand.shape
    m = surv.sum(axis=1).astype(np.int64)
    out = np.full((n, K), -1, dtype=np.int64)
    if n == 0:
        return out, m
    width = max(C, K)
    if mode == MODE_KNN:
        d2m = np.where(surv, d2, np.inf)
        candm = np.where(surv, cand, np.iinfo(np.int64).max)
        order = np.lexsort((candm, d2m), axis=1)
        S = np.take_along_axis(cand, order, axis=1)
        if width > C:
            S = np.concatenate([S, np.full((n, width - C), -1, dtype=np.int64)], axis=1)
        kk = np.arange(K, dtype=np.int64)
        msafe = np.maximum(m, 1)
        col = np.where(kk[None, :] < m[:, None], kk[None, :], kk[None, :] % msafe[:, None])
        out = np.take_along_axis(S, col, axis=1)
        out[m == 0] = -1
        return out, m

    order = np.argsort(~surv, axis=1, kind="stable")
    S = np.take_along_axis(cand, order, axis=1)
    if width > C:
        S = np.concatenate([S, np.full((n, width - C), -1, dtype=np.int64)], axis=1)
    bases = center_bases(seed, stream, n, first)
    rows = np.arange(n)
    for k in range(min(K, int(m.max()))):
        act = rows[m > k]
        h = key64(bases[act], np.uint64(k))
        j = k + bounded(h, m[act] - k)
        a = S[act, k].copy()
        S[act, k] = S[act, j]
        S[act, j] = a
    out[:, :] = S[:, :K]
    for k in range(K):
        act = rows[(m > 0) & (m <= k)]
        if act.size == 0:
            continue
        h = key64(bases[act], np.uint64(K + k))
        j = bounded(h, m[act])
        out[act, k] = S[act, j]
    out[m == 0] = -1
    return out, m


def window_group(coords, valid, center_rc, center_xyz, kh, kw, radius, K, mode, seed, stream):
    """Group grid cells inside a wrapped kernel window, filter by radius, select K.

    Returns ``(idx, nsurv)``: ``idx`` is (n, K) flat cell indices (-1 when a
    center has no survivor), ``nsurv`` the survivor count per center.
    """
    H, W = valid.shape
    coords = np.asarray(coords, dtype=np.float64).reshape(H * W, 3)
    validf = np.asarray(valid).reshape(-1).astype(bool)
    center_rc = np.asarray(center_rc, dtype=np.int64).reshape(-1, 2)
    center_xyz = np.asarray(center_xyz, dtype=np.float64).reshape(-1, 3)
    dr, dc = window_offsets(kh, kw, W)
    rows = center_rc[:, :1] + dr[None, :]
    cols = np.mod(center_rc[:, 1:] + dc[None, :], W)
    inrange = (rows >= 0) & (rows < H)
    flat = np.where(inrange, rows, 0) * W + cols
    ok = inrange & validf[flat]
    p = coords[flat]
    dx = p[..., 0] - center_xyz[:, None, 0]
    dy = p[..., 1] - center_xyz[:, None, 1]
    dz = p[..., 2] - center_xyz[:, None, 2]
    d2 = dx * dx + dy * dy + dz * dz
    surv = ok & (d2 <= radius * radius)
    return _select(flat, d2, surv, K, mode, seed, stream)


def full_group(points, point_ids, center_xyz, radius, K, mode, seed, stream, chunk=32):
    """Radius filter over *all* points (no kernel prior), then select K."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    point_ids = np.asarray(point_ids, dtype=np.int64)
    center_xyz = np.asarray(center_xyz, dtype=np.float64).reshape(-1, 3)
    n = center_xyz.shape[0]
    out = np.full((n, K), -1, dtype=np.int64)
    nsurv = np.zeros(n, dtype=np.int64)
    r2 = radius * radius
    for s in range(0, n, chunk):
        c = center_xyz[s : s + chunk]
        dx = points[None, :, 0] - c[:, None, 0]
        dy = points[None, :, 1] - c[:, None, 1]
        dz = points[None, :, 2] - c[:, None, 2]
        d2 = dx * dx + dy * dy + dz * dz
        surv = d2 <= r2
        width = int(surv.sum(axis=1).max()) if surv.size else 0
        if mode == MODE_KNN:
            cand = np.broadcast_to(point_ids, d2.shape)
            idx, m = _select(cand, d2, surv, K, mode, seed, stream, s)
        else:
            # compact survivors first to keep memory bounded
            order = np.argsort(~surv, axis=1, kind="stable")[:, : max(width, 1)]
            cand = point_ids[order]
            d2c = np.take_along_axis(d2, order, axis=1)
            survc = np.take_along_axis(surv, order, axis=1)
            idx, m = _select(cand, d2c, survc, K, mode, seed, stream, s)
        out[s : s + chunk] = idx
        nsurv[s : s + chunk] = m
    return out, nsurv

