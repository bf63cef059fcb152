"""Network hyperparameters."""
from __future__ import annotations

from dataclasses import dataclass, field

from ..pointops import CostVolumeConfig, LevelConfig, UpconvConfig
from ..projection import ProjectionConfig


def _default_levels():
    return (
        LevelConfig(stride=(4, 8), kernel=(9, 15), K=32, radius=0.75, mlp=(8, 8, 16)),
        LevelConfig(stride=(2, 2), kernel=(7, 11), K=32, radius=3.0, mlp=(16, 16, 32)),
        LevelConfig(stride=(2, 2), kernel=(7, 11), K=16, radius=6.0, mlp=(32, 32, 64)),
        LevelConfig(stride=(1, 2), kernel=(7, 11), K=16, radius=12.0, mlp=(64, 64, 128)),
    )


@dataclass(frozen=True)
class NetworkConfig:
    """Pyramid, cost volume, refinement and loss settings.

    ``grid_radii[l]`` is the filter radius for grouping *within* the level-l
    grid (refinement cost volume stage 2 and upconv lookups into level l).
    ``alphas`` weight the per-level losses, finest level first.
    """

    projection: ProjectionConfig = field(default_factory=ProjectionConfig)
    levels: tuple[LevelConfig, ...] = field(default_factory=_default_levels)
    grid_radii: tuple[float, ...] = (3.0, 6.0, 12.0, 12.0)
    embed_conv: LevelConfig = field(
        default_factory=lambda: LevelConfig(stride=(1, 2), kernel=(7, 11), K=16, radius=12.0,
                                            mlp=(128, 64, 64))
    )
    initial_cv: CostVolumeConfig = field(default_factory=lambda: CostVolumeConfig(K1=4, K2=32))
    refine_cv: CostVolumeConfig = field(default_factory=lambda: CostVolumeConfig(K1=4, K2=6))
    upconv: UpconvConfig = field(default_factory=UpconvConfig)
    embed_mlp: tuple[int, ...] = (128, 64)
    mask_mlp: tuple[int, ...] = (128, 64)
    head_init_scale: float = 0.01
    alphas: tuple[float, ...] = (1.6, 0.8, 0.4, 0.2)
    s_x0: float = 0.0
    s_q0: float = -2.5

    def __post_init__(self):
        L = len(self.levels)
        if L < 2:
            raise ValueError("need at least two pyramid levels")
        if len(self.alphas) != L:
            raise ValueError(f"alphas must have one weight per level ({L}), got {len(self.alphas)}")
        if len(self.grid_radii) != L:
            raise ValueError(f"grid_radii must have {L} entries")
        c_e = self.initial_cv.mlp2[-1]
        for name, width in (
            ("refine_cv.mlp2", self.refine_cv.mlp2[-1]),
            ("embed_conv.mlp", self.embed_conv.mlp[-1]),
            ("embed_mlp", self.embed_mlp[-1]),
            ("mask_mlp", self.mask_mlp[-1]),
            ("upconv.mlp2", self.upconv.mlp2[-1]),
        ):
            if width != c_e:
                raise ValueError(f"{name} output width {width} must equal embedding width {c_e}")

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def level_projection(self, l: int) -> ProjectionConfig:
        """Grid geometry of pyramid level ``l`` (after ``l + 1`` stride samplings)."""
        proj = self.projection
        for lc in self.levels[: l + 1]:
            proj = proj.downsample(*lc.stride)
        return proj

    def level_shapes(self) -> list[tuple[int, int]]:
        return [(p.H, p.W) for p in (self.level_projection(l) for l in range(self.n_levels))]


def toy_config(H: int = 16, W: int = 256, n_levels: int = 4) -> NetworkConfig:
    """Reduced-resolution network used for desk-scale training and tests.

    The first stride is (2, 8) rather than (4, 8) so that the coarsest
    levels keep two rows of a 16-row grid instead of only the top one.
    """
    levels = (
        LevelConfig(stride=(2, 8), kernel=(5, 9), K=16, radius=3.0, mlp=(8, 8, 16)),
        LevelConfig(stride=(2, 2), kernel=(3, 5), K=16, radius=6.0, mlp=(16, 16, 32)),
        LevelConfig(stride=(2, 2), kernel=(3, 5), K=8, radius=12.0, mlp=(32, 32, 64)),
        LevelConfig(stride=(1, 2), kernel=(3, 5), K=8, radius=24.0, mlp=(64, 64, 128)),
    )[:n_levels]
    radii = (6.0, 12.0, 24.0, 24.0)[:n_levels]
    last = levels[-1]
    return NetworkConfig(
        projection=ProjectionConfig(H=H, W=W),
        levels=levels,
        grid_radii=radii,
        embed_conv=LevelConfig(stride=last.stride, kernel=(3, 5), K=8, radius=last.radius,
                               mlp=(64, 32, 32)),
        initial_cv=CostVolumeConfig(K1=4, K2=8, kernel1=(3, 5), kernel2=(3, 5), mlp1=(64, 32, 32),
                                    mlp2=(64, 32)),
        refine_cv=CostVolumeConfig(K1=4, K2=6, kernel1=(3, 5), kernel2=(3, 5), mlp1=(64, 32, 32),
                                   mlp2=(64, 32)),
        upconv=UpconvConfig(kernel=(3, 5), K=4, mlp1=(64, 32), mlp2=(32,)),
        embed_mlp=(64, 32),
        mask_mlp=(64, 32),
        alphas=(1.6, 0.8, 0.4, 0.2)[:n_levels],
    )
