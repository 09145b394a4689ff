"""带地理参考的角秒格网、其上的栅格与点

行自北向南，列自西向东。格网按角点配准：origin_lat 是第 0 行的北边界，
origin_lon 是第 0 列的西边界。
"""
from dataclasses import dataclass
import math
from typing import Optional, Tuple

import numpy as np

from ..utils.errors import GridMismatchError

EARTH_RADIUS_KM = 6371.0
ARCSEC_PER_DEGREE = 3600.0


@dataclass(frozen=True)
class GeoGrid:
    origin_lat: float
    origin_lon: float
    res_arcsec: float
    rows: int
    cols: int

    def __post_init__(self):
        if int(self.rows) != self.rows or int(self.cols) != self.cols:
            raise ValueError(f"grid dimensions must be integers, got {self.rows}x{self.cols}")
        object.__setattr__(self, "rows", int(self.rows))
        object.__setattr__(self, "cols", int(self.cols))
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"grid needs at least one cell, got {self.rows}x{self.cols}")
        if not self.res_arcsec > 0:
            raise ValueError(f"res_arcsec must be positive, got {self.res_arcsec}")
        south = self.origin_lat - self.rows * self.res_deg
        east = self.origin_lon + self.cols * self.res_deg
        if self.origin_lat > 90.0 or south < -90.0:
            raise ValueError(f"latitude extent [{south}, {self.origin_lat}] outside [-90, 90]")
        if self.origin_lon < -180.0 or east > 180.0:
            raise ValueError(f"longitude extent [{self.origin_lon}, {east}] outside [-180, 180)")

    @property
    def res_deg(self) -> float:
        return self.res_arcsec / ARCSEC_PER_DEGREE

    @property
    def shape(self) -> Tuple[int, int]:
        return self.rows, self.cols

    @property
    def south_lat(self) -> float:
        return self.origin_lat - self.rows * self.res_deg

    def cell_center(self, row: int, col: int) -> Tuple[float, float]:
        return (self.origin_lat - (row + 0.5) * self.res_deg,
                self.origin_lon + (col + 0.5) * self.res_deg)

    def row_center_lats(self) -> np.ndarray:
        return self.origin_lat - (np.arange(self.rows) + 0.5) * self.res_deg

    def col_center_lons(self) -> np.ndarray:
        return self.origin_lon + (np.arange(self.cols) + 0.5) * self.res_deg

    def cell_of(self, lat: float, lon: float) -> Tuple[int, int]:
        """包含该点的栅格行列号（可能落在格网之外）"""
        return (int(math.floor((self.origin_lat - lat) / self.res_deg)),
                int(math.floor((lon - self.origin_lon) / self.res_deg)))

    def coarsen(self, factor: int) -> "GeoGrid":
        """每个栅格合并 factor x factor 块的粗格网，边缘不足一块时向上取整"""
        if factor < 1:
            raise ValueError(f"factor must be >= 1, got {factor}")
        return GeoGrid(self.origin_lat, self.origin_lon, self.res_arcsec * factor,
                       -(-self.rows // factor), -(-self.cols // factor))

    def pixel_grid(self, subdivisions: int) -> "GeoGrid":
        """把每个栅格细分为 subdivisions x subdivisions 像素的细格网"""
        return GeoGrid(self.origin_lat, self.origin_lon, self.res_arcsec / subdivisions,
                       self.rows * subdivisions, self.cols * subdivisions)

    def subgrid(self, row0: int, col0: int, rows: int, cols: int) -> "GeoGrid":
        return GeoGrid(self.origin_lat - row0 * self.res_deg,
                       self.origin_lon + col0 * self.res_deg,
                       self.res_arcsec, rows, cols)

    def same_as(self, other: "GeoGrid", tol: float = 1e-9) -> bool:
        return (self.rows == other.rows and self.cols == other.cols
                and abs(self.res_arcsec - other.res_arcsec) <= tol * self.res_arcsec
                and abs(self.origin_lat - other.origin_lat) <= tol
                and abs(self.origin_lon - other.origin_lon) <= tol)

    def to_dict(self) -> dict:
        return {"origin_lat": self.origin_lat, "origin_lon": self.origin_lon,
                "res_arcsec": self.res_arcsec, "rows": self.rows, "cols": self.cols}

    @classmethod
    def from_dict(cls, data: dict) -> "GeoGrid":
        return cls(float(data["origin_lat"]), float(data["origin_lon"]),
                   float(data["res_arcsec"]), int(data["rows"]), int(data["cols"]))


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0) or not (-180.0 <= self.lon < 180.0):
            raise ValueError(f"point ({self.lat}, {self.lon}) outside valid coordinate ranges")


@dataclass
class Raster:
    """格网上的稠密栅格值

    values 是 (rows, cols) 的二维数组；nodata 标记覆盖范围外的栅格
    （全部有效时为 None，可以是 NaN）。
    """
    grid: GeoGrid
    values: np.ndarray
    nodata: Optional[float] = None

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} does not match grid {self.grid.shape}")

    def valid_mask(self) -> np.ndarray:
        if self.nodata is None:
            return np.ones(self.grid.shape, dtype=bool)
        if isinstance(self.nodata, float) and math.isnan(self.nodata):
            return ~np.isnan(self.values)
        return self.values != self.nodata

    def filled(self, fill=0) -> np.ndarray:
        """无数据栅格替换为 fill 后的取值"""
        return np.where(self.valid_mask(), self.values, fill)

    def as_bool(self) -> np.ndarray:
        """二值视图：有效且非零的栅格为 True"""
        return self.valid_mask() & (self.values != 0)

    def with_values(self, values: np.ndarray, nodata: Optional[float] = None) -> "Raster":
        return Raster(self.grid, values, nodata)

    def copy(self) -> "Raster":
        return Raster(self.grid, self.values.copy(), self.nodata)

    def is_binary(self) -> bool:
        vals = self.values[self.valid_mask()]
        return bool(np.all((vals == 0) | (vals == 1)))


def require_same_grid(*rasters: Raster) -> GeoGrid:
    grid = rasters[0].grid
    for other in rasters[1:]:
        if not grid.same_as(other.grid):
            raise GridMismatchError(f"grid mismatch: {grid} vs {other.grid}")
    return grid


def row_areas_km2(grid: GeoGrid) -> np.ndarray:
    """每一行单个栅格的面积（球面地球，取栅格中心纬度）"""
    delta = math.radians(grid.res_deg)
    side = EARTH_RADIUS_KM * delta
    return side * side * np.cos(np.radians(grid.row_center_lats()))


def cell_area_km2(grid: GeoGrid, row: int) -> float:
    if not 0 <= row < grid.rows:
        raise IndexError(f"row {row} outside grid with {grid.rows} rows")
    delta = math.radians(grid.res_deg)
    lat = grid.origin_lat - (row + 0.5) * grid.res_deg
    return (EARTH_RADIUS_KM * delta) * (EARTH_RADIUS_KM * delta * math.cos(math.radians(lat)))
