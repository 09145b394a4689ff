from dataclasses import asdict, dataclass, fields
import os
from typing import Optional, Tuple

from ..geo.grid import GeoGrid
from ..utils.config import read_key_values
from ..utils.errors import ConfigError


@dataclass
class WorldSpec:
    """合成世界描述

    - 范围：以 1 角秒栅格为单位的行列数，每个栅格 px_per_cell 像素
    - 区域：densities 为自北向南各水平条带的建筑栅格占比
    - 建筑：尺寸范围（像素）、阴影宽度、屋顶亮度
    - 纹理与噪声水平
    - 行政层级：coarse_rows x coarse_cols 个粗级单元，每个拆为 fine_per_coarse 个细级单元
    - 住户样本数、人口密度与对数正态扰动
    """

    seed: int = 0
    origin_lat: float = -13.0
    origin_lon: float = 34.0
    rows: int = 32
    cols: int = 32
    px_per_cell: int = 64
    tile_cells: int = 16

    densities: str = "0.08,0.02"
    settlements_per_region: int = 2
    settlement_spread: float = 3.0

    building_min_px: int = 12
    building_max_px: int = 36
    shadow_px: int = 3
    roof_min: float = 0.75
    roof_max: float = 0.95
    shadow_level: float = 0.1
    background: float = 0.35
    texture: float = 0.04
    noise: float = 0.02

    coarse_rows: int = 2
    coarse_cols: int = 2
    fine_per_coarse: int = 2

    households: int = 200
    household_jitter_m: float = 30.0
    people_per_px: float = 0.02
    jitter_sigma: float = 0.3
    reference_dropout: float = 0.2

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            kind = type(f.default)
            try:
                if kind is int and isinstance(value, str):
                    value = int(value.strip())
                else:
                    value = kind(value)
            except (TypeError, ValueError):
                raise ConfigError(f.name, f"无法转换为 {kind.__name__}: {value!r}")
            setattr(self, f.name, value)
        self._validate()

    def _validate(self):
        if self.rows < 1 or self.cols < 1:
            raise ConfigError("rows", f"范围退化: {self.rows}x{self.cols}")
        if self.px_per_cell < 8 or self.px_per_cell % 8:
            raise ConfigError("px_per_cell", "必须是 8 的正整数倍")
        if self.tile_cells < 1:
            raise ConfigError("tile_cells", "必须 >= 1")
        for d in self.density_list():
            if not 0.0 <= d <= 1.0:
                raise ConfigError("densities", f"密度必须在 [0, 1] 内: {d}")
        if len(self.density_list()) > self.rows:
            raise ConfigError("densities", "区域数不能超过行数")
        if not 1 <= self.building_min_px <= self.building_max_px:
            raise ConfigError("building_min_px", "必须满足 1 <= min <= max")
        if self.building_max_px + self.shadow_px + 2 * self.margin_px > self.px_per_cell:
            raise ConfigError("building_max_px", f"建筑加阴影放不进 {self.px_per_cell} 像素的栅格")
        if not 0.0 <= self.roof_min <= self.roof_max <= 1.0:
            raise ConfigError("roof_min", "屋顶亮度必须满足 0 <= min <= max <= 1")
        if self.coarse_rows < 1 or self.coarse_cols < 1 or self.coarse_rows > self.rows or self.coarse_cols > self.cols:
            raise ConfigError("coarse_rows", "粗级单元划分超出范围")
        if self.fine_per_coarse < 1:
            raise ConfigError("fine_per_coarse", "必须 >= 1")
        if self.cols // self.coarse_cols < self.fine_per_coarse:
            raise ConfigError("fine_per_coarse", "粗级单元的列数不足以拆分")
        if self.fine_per_coarse > 99:
            raise ConfigError("fine_per_coarse", "必须 <= 99")
        for key in ("households", "settlements_per_region"):
            if getattr(self, key) < 0:
                raise ConfigError(key, "必须 >= 0")
        for key in ("texture", "noise", "jitter_sigma", "people_per_px", "household_jitter_m", "settlement_spread"):
            if getattr(self, key) < 0:
                raise ConfigError(key, "必须 >= 0")
        if not 0.0 <= self.reference_dropout <= 1.0:
            raise ConfigError("reference_dropout", "必须在 [0, 1] 内")
        try:
            self.cell_grid
        except ValueError as e:
            raise ConfigError("origin_lat", str(e))

    @property
    def margin_px(self) -> int:
        return 2

    def density_list(self) -> Tuple[float, ...]:
        try:
            return tuple(float(p) for p in str(self.densities).split(",") if p.strip())
        except ValueError:
            raise ConfigError("densities", f"无法解析: {self.densities}")

    @property
    def cell_grid(self) -> GeoGrid:
        return GeoGrid(self.origin_lat, self.origin_lon, 1.0, self.rows, self.cols)

    @property
    def pixel_grid(self) -> GeoGrid:
        return self.cell_grid.pixel_grid(self.px_per_cell)

    @property
    def tile_px(self) -> int:
        return self.tile_cells * self.px_per_cell

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_file(cls, path: str, overrides: Optional[dict] = None) -> "WorldSpec":
        """从键值文件加载，未知键报错"""
        if not os.path.isfile(path):
            raise ConfigError("worldspec", f"文件不存在: {path}")
        values = read_key_values(path)
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(unknown[0], "未知的世界配置项")
        return cls(**values)

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for key, value in self.to_dict().items():
                f.write(f"{key.upper()}={value}\n")
