"""球面地球上的大圆距离（R = 6371 km）"""
import numpy as np
from sklearn.neighbors import BallTree

from ..utils.errors import EmptyClusterError
from .grid import EARTH_RADIUS_KM, GeoPoint, Raster, require_same_grid


def haversine_km(lat1, lon1, lat2, lon2):
    """向量化的 haversine 距离，单位千米（输入为度）"""
    lat1, lon1, lat2, lon2 = (np.radians(np.asarray(v, dtype=np.float64)) for v in (lat1, lon1, lat2, lon2))
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = np.sin(dlat / 2.0) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def geodesic_distance_km(a: GeoPoint, b: GeoPoint) -> float:
    if a == b:
        return 0.0
    return float(haversine_km(a.lat, a.lon, b.lat, b.lon))


def _cell_centers(mask: np.ndarray, grid):
    rows, cols = np.nonzero(mask)
    lats = grid.row_center_lats()[rows]
    lons = grid.col_center_lons()[cols]
    return lats, lons


def nearest_distance_km(lats, lons, mask: Raster) -> np.ndarray:
    """每个点到 mask 中最近的真值栅格中心的距离

    mask 没有真值栅格时全部返回 +inf。
    """
    lats = np.asarray(lats, dtype=np.float64)
    lons = np.asarray(lons, dtype=np.float64)
    target = mask.as_bool()
    if not target.any():
        return np.full(lats.shape, np.inf)
    t_lats, t_lons = _cell_centers(target, mask.grid)
    tree = BallTree(np.radians(np.column_stack([t_lats, t_lons])), metric="haversine")
    dist, _ = tree.query(np.radians(np.column_stack([lats.ravel(), lons.ravel()])), k=1)
    return (dist[:, 0] * EARTH_RADIUS_KM).reshape(lats.shape)


def distance_to_mask_km(r_pop: Raster, mask: Raster) -> Raster:
    """逐栅格计算栅格中心到最近 mask 栅格中心的大圆距离

    mask 内的栅格距离恰好为 0。
    """
    grid = require_same_grid(r_pop, mask)
    inside = mask.as_bool()
    if not inside.any():
        raise EmptyClusterError()
    lat_grid, lon_grid = np.meshgrid(grid.row_center_lats(), grid.col_center_lons(), indexing="ij")
    out = np.zeros(grid.shape, dtype=np.float64)
    outside = ~inside
    if outside.any():
        out[outside] = nearest_distance_km(lat_grid[outside], lon_grid[outside], mask)
    return Raster(grid, out, None)
