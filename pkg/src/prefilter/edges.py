"""直线边缘检测：Canny 边缘加概率霍夫变换"""
from dataclasses import dataclass
import math
from typing import List, Tuple

import numpy as np
from skimage.draw import line as draw_line
from skimage.feature import canny
from skimage.transform import probabilistic_hough_line

from .imagery import ImageTile

HOUGH_SEED = 0


@dataclass(frozen=True)
class LineSegment:
    """两个像素坐标 (row, col) 之间的线段及其边缘支持数"""
    start: Tuple[int, int]
    end: Tuple[int, int]
    strength: int

    @property
    def midpoint(self) -> Tuple[float, float]:
        return ((self.start[0] + self.end[0]) / 2.0, (self.start[1] + self.end[1]) / 2.0)

    @property
    def orientation_deg(self) -> float:
        """与水平方向的夹角，取值 [0, 180)"""
        dr = self.end[0] - self.start[0]
        dc = self.end[1] - self.start[1]
        return math.degrees(math.atan2(-dr, dc)) % 180.0


def detect_edges(tile: ImageTile, low: float, high: float, sigma: float = 1.0) -> np.ndarray:
    """Sobel 梯度、非极大值抑制与双阈值滞后连接"""
    if not 0.0 <= low <= high:
        raise ValueError(f"thresholds must satisfy 0 <= low <= high, got {low}, {high}")
    if tile.pixels.max() == tile.pixels.min():
        return np.zeros(tile.pixels.shape, dtype=bool)
    return canny(tile.pixels, sigma=sigma, low_threshold=low, high_threshold=high, mode="nearest")


def extract_lines(edges: np.ndarray, min_support: int, threshold: int = 5,
                  line_gap: int = 2, seed: int = HOUGH_SEED) -> List[LineSegment]:
    """概率霍夫线段，只保留至少含 min_support 个边缘像素的线段"""
    if min_support < 1:
        raise ValueError(f"min_support must be >= 1, got {min_support}")
    edges = np.asarray(edges, dtype=bool)
    if not edges.any():
        return []
    raw = probabilistic_hough_line(edges, threshold=threshold, line_length=min_support,
                                   line_gap=line_gap, rng=seed)
    segments = []
    for (x0, y0), (x1, y1) in raw:
        rr, cc = draw_line(int(y0), int(x0), int(y1), int(x1))
        support = int(edges[rr, cc].sum())
        if support >= min_support:
            segments.append(LineSegment((int(y0), int(x0)), (int(y1), int(x1)), support))
    segments.sort(key=lambda s: (s.start, s.end))
    return segments
