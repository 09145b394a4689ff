"""栅格渲染为 PNG，并附文本图例

样式表：

    binary          0 -> 浅灰, 1 -> 深红
    fraction        YlOrRd，取值截断到 [0, 1]
    population-log  magma，按 log10(1 + v) / log10(1 + max)
    clusters        0（农村）-> 灰色，编号 k -> tab20 第 (k - 1) mod 20 种颜色

无数据栅格在所有样式中均为黑色。
"""
import numpy as np
from matplotlib import colormaps
from PIL import Image

from ..geo.grid import Raster
from ..utils.path_utils import PathUtils

STYLES = ("binary", "fraction", "population-log", "clusters")
LUT_SIZE = 256
NODATA_RGB = (0, 0, 0)
BINARY_RGB = ((235, 235, 235), (178, 24, 43))
RURAL_RGB = (190, 190, 190)


def colormap_lut(name: str, n: int = LUT_SIZE) -> np.ndarray:
    """从 matplotlib 色表均匀采样的 (n, 3) uint8 颜色表"""
    rgba = colormaps[name](np.linspace(0.0, 1.0, n))
    return np.round(rgba[:, :3] * 255.0).astype(np.uint8)


def style_values(raster: Raster, style: str) -> np.ndarray:
    """每个栅格在样式色阶中的位置（[0, 1]，聚类样式为类别编号）"""
    if style not in STYLES:
        raise ValueError(f"unknown style {style!r}, expected one of {STYLES}")
    v = raster.filled(0).astype(np.float64)
    if style == "binary":
        return (v != 0).astype(np.float64)
    if style == "fraction":
        return np.clip(v, 0.0, 1.0)
    if style == "population-log":
        v = np.maximum(v, 0.0)
        top = v.max()
        return np.log10(1.0 + v) / np.log10(1.0 + top) if top > 0 else np.zeros_like(v)
    return v


def colorize(raster: Raster, style: str) -> np.ndarray:
    """(rows, cols, 3) uint8 图像"""
    pos = style_values(raster, style)
    rgb = np.zeros(pos.shape + (3,), dtype=np.uint8)
    if style == "binary":
        rgb[:] = BINARY_RGB[0]
        rgb[pos > 0] = BINARY_RGB[1]
    elif style == "clusters":
        lut = colormap_lut("tab20", 20)
        ids = pos.astype(np.int64)
        rgb[:] = RURAL_RGB
        clustered = ids > 0
        rgb[clustered] = lut[(ids[clustered] - 1) % 20]
    else:
        lut = colormap_lut("YlOrRd" if style == "fraction" else "magma")
        rgb[:] = lut[np.round(pos * (LUT_SIZE - 1)).astype(np.int64)]
    rgb[~raster.valid_mask()] = NODATA_RGB
    return rgb


def _legend_lines(raster: Raster, style: str):
    vals = raster.values[raster.valid_mask()]
    top = float(vals.max()) if vals.size else 0.0
    lines = [f"style: {style}", f"cells: {raster.grid.rows}x{raster.grid.cols}", f"max: {top!r}",
             f"nodata: {NODATA_RGB}"]
    if style == "binary":
        lines += [f"0: {BINARY_RGB[0]}", f"1: {BINARY_RGB[1]}"]
    elif style == "clusters":
        lines += [f"0 (rural): {RURAL_RGB}", "k > 0: tab20[(k - 1) mod 20]"]
    elif style == "fraction":
        lut = colormap_lut("YlOrRd")
        lines += [f"0.0: {tuple(int(c) for c in lut[0])}", f"1.0: {tuple(int(c) for c in lut[-1])}", "colormap: YlOrRd"]
    else:
        lut = colormap_lut("magma")
        lines += ["scale: log10(1 + v) / log10(1 + max)",
                  f"0: {tuple(int(c) for c in lut[0])}", f"max: {tuple(int(c) for c in lut[-1])}", "colormap: magma"]
    return lines


def render(raster: Raster, style: str, path, scale: int = 1) -> str:
    """写出 PNG 图像与 <path>.legend.txt 图例，返回图像路径"""
    if scale < 1:
        raise ValueError(f"scale must be >= 1, got {scale}")
    rgb = colorize(raster, style)
    if scale > 1:
        rgb = np.repeat(np.repeat(rgb, scale, axis=0), scale, axis=1)
    PathUtils.ensure_parent(path)
    Image.fromarray(rgb).save(path, format="PNG")
    with open(f"{path}.legend.txt", "w", encoding="utf-8") as f:
        f.write("\n".join(_legend_lines(raster, style)) + "\n")
    return str(path)
