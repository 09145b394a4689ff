"""灰度影像块：PGM 读写与预平滑"""
from dataclasses import dataclass
import json
import os

import numpy as np
from PIL import Image
from scipy import ndimage

from ..geo.ascii_grid import read_grid_ascii
from ..geo.grid import GeoGrid
from ..utils.path_utils import PathUtils


@dataclass
class ImageTile:
    grid: GeoGrid
    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.shape != self.grid.shape:
            raise ValueError(f"pixels shape {self.pixels.shape} does not match grid {self.grid.shape}")
        if self.pixels.size and (self.pixels.min() < 0.0 or self.pixels.max() > 1.0):
            raise ValueError("tile intensities must lie in [0, 1]")

    @property
    def height(self) -> int:
        return self.grid.rows

    @property
    def width(self) -> int:
        return self.grid.cols


def to_grayscale(bands: np.ndarray) -> np.ndarray:
    """(bands, rows, cols) 多波段的亮度平均"""
    bands = np.asarray(bands, dtype=np.float64)
    return bands if bands.ndim == 2 else bands.mean(axis=0)


def smooth(tile: ImageTile, radius: int) -> ImageTile:
    """(2*radius+1)^2 窗口的中值滤波，radius 为 0 时原样返回"""
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    if radius == 0:
        return ImageTile(tile.grid, tile.pixels.copy())
    return ImageTile(tile.grid, ndimage.median_filter(tile.pixels, size=2 * radius + 1, mode="reflect"))


def read_pgm(path) -> np.ndarray:
    """读取 PGM（P5，maxval 255 或 65535），返回 [0, 1] 内的亮度"""
    with Image.open(path) as img:
        data = np.asarray(img)
        mode = img.mode
    scale = 255.0 if mode == "L" else 65535.0
    return np.clip(data.astype(np.float64) / scale, 0.0, 1.0)


def write_pgm(pixels: np.ndarray, path, sixteen_bit: bool = False) -> None:
    PathUtils.ensure_parent(path)
    pixels = np.clip(np.asarray(pixels, dtype=np.float64), 0.0, 1.0)
    if sixteen_bit:
        img = Image.fromarray(np.round(pixels * 65535.0).astype(np.uint16))
    else:
        img = Image.fromarray(np.round(pixels * 255.0).astype(np.uint8))
    img.save(path, format="PPM")


def _sidecar(path):
    return f"{path}.json"


def write_tile(tile: ImageTile, path) -> None:
    """写出 PGM 影像块，以及记录像素格网的 JSON 附属文件"""
    write_pgm(tile.pixels, path)
    with open(_sidecar(path), "w", encoding="utf-8") as f:
        json.dump({"grid": tile.grid.to_dict()}, f, indent=2)


def read_tile(path) -> ImageTile:
    """从 PGM（加格网附属文件）或 ASCII 栅格读取影像块"""
    if str(path).lower().endswith(".asc"):
        r = read_grid_ascii(path)
        return ImageTile(r.grid, np.clip(r.filled(0).astype(np.float64), 0.0, 1.0))
    sidecar = _sidecar(path)
    if not os.path.isfile(sidecar):
        raise FileNotFoundError(f"tile georeference sidecar missing: {sidecar}")
    with open(sidecar, "r", encoding="utf-8") as f:
        grid = GeoGrid.from_dict(json.load(f)["grid"])
    return ImageTile(grid, read_pgm(path))
