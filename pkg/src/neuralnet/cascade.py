"""按栅格组合分类得分与分割轮廓（级联）"""
import numpy as np

from ..geo.grid import Raster, require_same_grid


def cascade(class_raster: Raster, footprint_raster: Raster, tau: float) -> Raster:
    """分类得分 >= tau 的栅格保留轮廓比例，其余为 0

    任一输入为无数据的栅格，输出仍为无数据。
    """
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must be in [0, 1], got {tau}")
    grid = require_same_grid(class_raster, footprint_raster)
    valid = class_raster.valid_mask() & footprint_raster.valid_mask()
    keep = valid & (class_raster.filled(0.0) >= tau)
    out = np.where(keep, footprint_raster.filled(0.0), 0.0).astype(np.float64)
    if valid.all():
        return Raster(grid, out, None)
    out[~valid] = np.nan
    return Raster(grid, out, np.nan)


def footprint_fraction(footprint: np.ndarray, cell_px: int) -> np.ndarray:
    """每个 cell_px x cell_px 块内轮廓像素的占比"""
    footprint = np.asarray(footprint, dtype=np.float64)
    h, w = footprint.shape
    if h % cell_px or w % cell_px:
        raise ValueError(f"footprint {h}x{w} is not a whole number of {cell_px}px cells")
    return footprint.reshape(h // cell_px, cell_px, w // cell_px, cell_px).mean(axis=(1, 3))
