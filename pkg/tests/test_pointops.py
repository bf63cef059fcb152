import numpy as np
import pytest

from efficientlo.errors import EmptyNeighborhood
from efficientlo.harness.oracles import brute_force_window_knn, random_cloud
from efficientlo.numeric import Tensor, grad_check, sum_
from efficientlo.pointops import (
    CostVolumeConfig,
    LevelConfig,
    UpconvConfig,
    apply_mlp,
    attentive_cost_volume,
    distance_filter_select,
    group,
    group_all,
    init_cost_volume,
    init_mlp,
    kernel_group,
    set_conv,
    set_upconv,
    stride_sample,
)
from efficientlo.projection import ProjectedCloud, ProjectionConfig, project

CFG = ProjectionConfig(H=16, W=64)


def _full_grid(H, W, rng=None):
    coords = np.zeros((H, W, 3))
    coords[..., 0] = np.arange(H)[:, None]
    coords[..., 1] = np.arange(W)[None, :]
    if rng is not None:
        coords[..., 2] = rng.normal(size=(H, W)) * 0.01
    return ProjectedCloud(coords, np.ones((H, W), bool))


def test_stride_sample_slots():
    s = stride_sample(_full_grid(4, 8), 2, 2)
    expected = [(0, 0), (0, 2), (0, 4), (0, 6), (2, 0), (2, 2), (2, 4), (2, 6)]
    assert [tuple(x) for x in s.centers_rc] == expected
    assert s.grid.H == 2 and s.grid.W == 4 and len(s) == 8
    np.testing.assert_array_equal(s.xyz[:, :2], np.array(expected))


def test_stride_one_keeps_every_valid_cell(rng):
    pc = project(random_cloud(rng, 500, CFG), CFG)
    s = stride_sample(pc, 1, 1)
    np.testing.assert_array_equal(s.xyz, pc.points)
    with pytest.raises(ValueError):
        stride_sample(pc, 0, 1)


def test_stride_sample_skips_invalid():
    pc = _full_grid(4, 8)
    pc.valid[0, 2] = False
    pc = ProjectedCloud(pc.coords, pc.valid)
    assert len(stride_sample(pc, 2, 2)) == 7


def test_kernel_group_wraps_and_clips():
    pc = _full_grid(3, 10)
    (cells,) = kernel_group(pc, [[0, 0]], 3, 3)
    assert sorted(cells.tolist()) == sorted([9, 0, 1, 19, 10, 11])
    with pytest.raises(ValueError):
        kernel_group(pc, [[0, 0]], 2, 3)


def test_distance_filter_knn_tie_break():
    cand = np.array([7, 3, 5])
    xyz = np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 0.5]])
    out = distance_filter_select(np.zeros(3), cand, xyz, 2.0, 4, "knn")
    assert out.tolist() == [5, 3, 7, 5]


def test_distance_filter_random_pads_and_filters():
    cand = np.arange(5)
    xyz = np.array([[0.1, 0, 0], [0.2, 0, 0], [5, 0, 0], [0.3, 0, 0], [9, 9, 9]])
    out = distance_filter_select(np.zeros(3), cand, xyz, 1.0, 6, "random", seed=3)
    assert set(out[:3]) == {0, 1, 3} and set(out) <= {0, 1, 3}
    with pytest.raises(EmptyNeighborhood):
        distance_filter_select(np.zeros(3), cand, xyz + 50, 1.0, 2)
    with pytest.raises(ValueError):
        distance_filter_select(np.zeros(3), cand, xyz, 1.0, 2, "nearest")


def test_group_matches_oracle(rng):
    pc = project(random_cloud(rng, 1500, CFG), CFG)
    s = stride_sample(pc, 2, 2)
    nb = group(pc, s.centers_rc, s.xyz, (5, 9), 6.0, 8, "knn")
    for i in range(len(s)):
        ref = brute_force_window_knn(pc, s.centers_rc[i], s.xyz[i], (5, 9), 6.0, 8)
        assert nb.idx[i].tolist() == (ref or [-1] * 8)


def test_group_all_is_superset_of_window(rng):
    pc = project(random_cloud(rng, 1500, CFG), CFG)
    s = stride_sample(pc, 2, 2)
    win = group(pc, s.centers_rc, s.xyz, (5, 9), 3.0, 4, "knn")
    full = group_all(pc, s.xyz, 3.0, 4, "knn")
    assert (full.nsurv >= win.nsurv).all()
    d_full = np.linalg.norm(full.xyz(pc)[:, 0] - s.xyz, axis=1)
    d_win = np.linalg.norm(win.xyz(pc)[:, 0] - s.xyz, axis=1)
    assert (d_full <= d_win + 1e-12).all()


def _layers(rng, in_dim, widths, zero=False):
    layers = init_mlp(rng, in_dim, widths, np.float64)
    if zero:
        for W, b in layers:
            W.data[:] = 0
    return layers


def test_set_conv_zero_weights_give_zero_features(rng):
    pc = project(random_cloud(rng, 1500, CFG), CFG)
    cfg = LevelConfig(stride=(2, 2), kernel=(3, 5), K=4, radius=50.0, mlp=(4, 6))
    _, f = set_conv(pc, None, cfg, _layers(rng, 3, cfg.mlp, zero=True))
    assert f.shape[1] == 6 and not f.data.any()


def test_set_conv_matches_loop_oracle(rng):
    pc = project(random_cloud(rng, 600, CFG), CFG)
    feats = Tensor(rng.normal(size=(pc.count, 3)))
    cfg = LevelConfig(stride=(2, 4), kernel=(3, 5), K=3, radius=30.0, mlp=(5, 4), mode="knn")
    layers = _layers(rng, 9, cfg.mlp)
    sampled, out = set_conv(pc, feats, cfg, layers)
    Ws = [(W.data, b.data) for W, b in layers]
    flat = pc.coords.reshape(-1, 3)
    for i, (rc, x) in enumerate(zip(sampled.centers_rc, sampled.xyz)):
        ids = brute_force_window_knn(pc, rc, x, cfg.kernel, cfg.radius, cfg.K)
        fc = feats.data[pc.rank[rc[0] * pc.W + rc[1]]]
        best = None
        for j in ids:
            h = np.concatenate([flat[j] - x, feats.data[pc.rank[j]], fc])
            for W, b in Ws:
                h = np.maximum(h @ W + b, 0)
            best = h if best is None else np.maximum(best, h)
        np.testing.assert_allclose(out.data[i], best, atol=1e-12)


def test_set_conv_is_deterministic(rng):
    pc = project(random_cloud(rng, 1500, CFG), CFG)
    cfg = LevelConfig(stride=(2, 2), kernel=(3, 5), K=4, radius=10.0, mlp=(4,))
    layers = _layers(rng, 3, cfg.mlp)
    a = set_conv(pc, None, cfg, layers, seed=9, stream=1)[1].data
    b = set_conv(pc, None, cfg, layers, seed=9, stream=1)[1].data
    assert np.array_equal(a, b)


def test_upconv_identity_stride_single_cell(rng):
    pc = project(random_cloud(rng, 400, CFG), CFG)
    feats = Tensor(rng.normal(size=(pc.count, 4)))
    cfg = UpconvConfig(kernel=(1, 1), K=2, radius=1.0, mlp1=(5,), mlp2=(3,))
    l1, l2 = _layers(rng, 7, cfg.mlp1), _layers(rng, 5, cfg.mlp2)
    out = set_upconv(pc, pc, feats, (1, 1), cfg, l1, l2)
    x = Tensor(np.concatenate([np.zeros((pc.count, 3)), feats.data], 1))
    np.testing.assert_allclose(out.data, apply_mlp(apply_mlp(x, l1), l2).data, atol=1e-12)


def test_upconv_fallback_when_window_empty(rng):
    dense = _full_grid(4, 8)
    sparse_valid = np.zeros((2, 4), bool)
    sparse_valid[0, 0] = True
    sparse = ProjectedCloud(dense.coords[::2, ::2].copy(), sparse_valid)
    feats = Tensor(np.ones((1, 2)))
    cfg = UpconvConfig(kernel=(1, 1), K=2, radius=0.1, mlp1=(3,), mlp2=(2,))
    out = set_upconv(dense, sparse, feats, (2, 2), cfg, _layers(rng, 5, (3,)), _layers(rng, 3, (2,)))
    assert out.shape == (32, 2) and np.isfinite(out.data).all()


def _regrid(pc):
    # default source: row-major rank, i.e. rows of pc.points
    return ProjectedCloud(pc.coords, pc.valid)


def _cv_setup(rng, n=800):
    pc1 = _regrid(project(random_cloud(rng, n, CFG), CFG))
    pc2 = _regrid(project(random_cloud(rng, n, CFG), CFG))
    cfg = CostVolumeConfig(K1=3, K2=4, kernel1=(3, 5), kernel2=(3, 5), radius=10.0, mlp1=(6, 5), mlp2=(6, 4))
    F1 = Tensor(rng.normal(size=(pc1.count, 3)))
    F2 = Tensor(rng.normal(size=(pc2.count, 3)))
    w = init_cost_volume(rng, 3, 3, cfg, np.float64)
    return pc1, pc2, cfg, F1, F2, w


def test_cost_volume_shapes_and_uniform_attention(rng):
    pc1, pc2, cfg, F1, F2, w = _cv_setup(rng)
    E, stats = attentive_cost_volume(Tensor(pc1.points), pc1.cell_rc, pc1, F1, pc2, F2, cfg, w)
    assert E.shape == (pc1.count, 4)
    # zero attention logits make both stages plain means over neighbors
    for part in ("u1", "u2"):
        for W, b in w[part]:
            W.data[:] = 0
    E0, _ = attentive_cost_volume(Tensor(pc1.points), pc1.cell_rc, pc1, F1, pc2, F2, cfg, w)
    assert np.isfinite(E0.data).all()
    assert not np.array_equal(E0.data, E.data)


def test_cost_volume_gradient_wrt_points(rng):
    pc1, pc2, cfg, F1, F2, w = _cv_setup(rng, 300)
    probe = rng.normal(size=(pc1.count, 4))

    def fn(xs):
        E, _ = attentive_cost_volume(xs[0], pc1.cell_rc, pc1, F1, pc2, F2, cfg, w)
        return sum_(E * Tensor(probe))

    idx = [(0, j) for j in rng.choice(pc1.count * 3, 20, replace=False)]
    assert grad_check(fn, [pc1.points], eps=1e-6, probes=idx) < 1e-3
