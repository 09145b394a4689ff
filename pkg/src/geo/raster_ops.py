"""栅格运算：块聚合与连通域标记"""
from typing import Tuple

import numpy as np
from scipy import ndimage

from .grid import Raster

AGGREGATE_MODES = ("sum", "mean", "max", "fraction_true")


def aggregate(r: Raster, factor: int, mode: str) -> Raster:
    """把 factor x factor 的块合并为一个粗栅格

    边缘不足一块时用无数据补齐。无数据栅格不参与求和，也不计入均值与
    比例的分母；没有有效栅格的块输出无数据。
    """
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    if mode not in AGGREGATE_MODES:
        raise ValueError(f"unknown aggregate mode {mode!r}, expected one of {AGGREGATE_MODES}")
    if factor == 1:
        return r.copy()

    coarse = r.grid.coarsen(factor)
    rows, cols = r.grid.shape
    padded = (coarse.rows * factor, coarse.cols * factor)
    valid = np.zeros(padded, dtype=bool)
    valid[:rows, :cols] = r.valid_mask()
    vals = np.zeros(padded, dtype=r.values.dtype)
    vals[:rows, :cols] = np.where(valid[:rows, :cols], r.values, 0)

    def blocks(a):
        return a.reshape(coarse.rows, factor, coarse.cols, factor)

    count = blocks(valid).sum(axis=(1, 3))
    empty = count == 0

    if mode == "sum":
        out = blocks(vals).sum(axis=(1, 3))
    elif mode == "max":
        if vals.dtype == bool:
            vals = vals.astype(np.uint8)
        floor = np.finfo(vals.dtype).min if vals.dtype.kind == "f" else np.iinfo(vals.dtype).min
        out = blocks(np.where(valid, vals, floor)).max(axis=(1, 3))
    else:
        numer = blocks(vals).sum(axis=(1, 3)) if mode == "mean" else blocks(valid & (vals != 0)).sum(axis=(1, 3))
        out = np.zeros(coarse.shape, dtype=np.float64)
        np.divide(numer, count, out=out, where=~empty)

    nodata = r.nodata
    if empty.any():
        if nodata is None:
            nodata = np.nan
        if out.dtype.kind != "f" and isinstance(nodata, float) and np.isnan(nodata):
            out = out.astype(np.float64)
        out = np.where(empty, nodata, out)
    return Raster(coarse, out, nodata)


def connected_components(r: Raster, connectivity: int = 4) -> Tuple[Raster, int]:
    """标记相连的真值栅格，标签按光栅扫描顺序从 1 连续编号"""
    if connectivity not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    if not r.is_binary():
        raise ValueError("connected_components expects a binary raster")
    structure = ndimage.generate_binary_structure(2, 1 if connectivity == 4 else 2)
    labels, count = ndimage.label(r.as_bool(), structure=structure)
    return Raster(r.grid, labels.astype(np.int32), 0), int(count)
