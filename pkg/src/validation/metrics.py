"""定居点图层的评分：混淆计数、三方一致性、调查点吻合度与容忍错位的召回率"""
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from ..geo.distance import nearest_distance_km
from ..geo.grid import GeoPoint, Raster, require_same_grid, row_areas_km2
from ..geo.raster_ops import aggregate, connected_components

CODES = tuple(range(8))
A_ONLY_POSITIVE = "a_only_positive"
A_ONLY_NEGATIVE = "a_only_negative"
DEFAULT_TOP_N = 500


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def precision(self) -> Optional[float]:
        denom = self.tp + self.fp
        return self.tp / denom if denom else None

    @property
    def recall(self) -> Optional[float]:
        denom = self.tp + self.fn
        return self.tp / denom if denom else None

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
                "precision": self.precision, "recall": self.recall}


def _labels(x):
    if isinstance(x, Raster):
        return x.as_bool().ravel()
    return np.asarray(x).astype(bool).ravel()


def confusion_counts(pred, truth) -> ConfusionCounts:
    p = _labels(pred)
    t = _labels(truth)
    if p.shape != t.shape:
        raise ValueError(f"prediction and truth lengths differ: {p.size} vs {t.size}")
    return ConfusionCounts(tp=int(np.sum(p & t)), fp=int(np.sum(p & ~t)),
                           fn=int(np.sum(~p & t)), tn=int(np.sum(~p & ~t)))


def precision_recall(pred, truth) -> Tuple[Optional[float], Optional[float], ConfusionCounts]:
    """Pr = TP/(TP+FP)，Re = TP/(TP+FN)；分母为 0 时返回 None"""
    if isinstance(pred, Raster) and isinstance(truth, Raster):
        require_same_grid(pred, truth)
        valid = pred.valid_mask() & truth.valid_mask()
        counts = confusion_counts(pred.as_bool()[valid], truth.as_bool()[valid])
    else:
        counts = confusion_counts(pred, truth)
    return counts.precision, counts.recall, counts


def precision_recall_from_counts(tp: int, fp: int, fn: int, tn: int = 0):
    counts = ConfusionCounts(tp, fp, fn, tn)
    return counts.precision, counts.recall, counts


def code_label(code: int) -> str:
    """按 A、B、C 顺序的有无位，例如 5 -> '101'"""
    return format(code, "03b")


@dataclass
class DisagreementArea:
    kind: str
    rank: int
    cells: int
    area_km2: float
    bbox: Tuple[int, int, int, int]
    centroid: Tuple[float, float]

    def to_dict(self) -> dict:
        return {"rank": self.rank, "kind": self.kind, "cells": self.cells, "area_km2": self.area_km2,
                "row_min": self.bbox[0], "col_min": self.bbox[1], "row_max": self.bbox[2],
                "col_max": self.bbox[3], "lat": self.centroid[0], "lon": self.centroid[1]}


@dataclass
class AgreementTable:
    """三套数据逐格存在/缺失组合的直方图

    code = 4*A + 2*B + C；area_km2 按每行真实面积累加。
    """
    counts: np.ndarray
    area_km2: np.ndarray

    @property
    def total_cells(self) -> int:
        return int(self.counts.sum())

    def proportions(self) -> np.ndarray:
        total = self.area_km2.sum()
        return self.area_km2 / total if total > 0 else np.zeros(len(CODES))

    def histogram(self) -> dict:
        return {code_label(c): int(self.counts[c]) for c in CODES}

    def rows(self) -> List[dict]:
        props = self.proportions()
        return [{"code": code_label(c), "cells": int(self.counts[c]), "area_km2": float(self.area_km2[c]),
                 "area_fraction": float(props[c])} for c in CODES]


def agreement_codes(a: Raster, b: Raster, c: Raster) -> Tuple[np.ndarray, np.ndarray]:
    """每个格子的编码，以及三个栅格都有效的格子掩膜"""
    require_same_grid(a, b, c)
    valid = a.valid_mask() & b.valid_mask() & c.valid_mask()
    codes = 4 * a.as_bool().astype(np.int64) + 2 * b.as_bool().astype(np.int64) + c.as_bool().astype(np.int64)
    return codes, valid


def _components(mask: np.ndarray, grid, kind: str) -> List[DisagreementArea]:
    labels, count = connected_components(Raster(grid, mask.astype(np.uint8)), connectivity=8)
    if count == 0:
        return []
    lab = labels.values.ravel()
    rows, cols = np.indices(grid.shape)
    areas = np.broadcast_to(row_areas_km2(grid)[:, None], grid.shape).ravel()
    sizes = np.bincount(lab, minlength=count + 1)
    area = np.bincount(lab, weights=areas, minlength=count + 1)
    row_sum = np.bincount(lab, weights=rows.ravel(), minlength=count + 1)
    col_sum = np.bincount(lab, weights=cols.ravel(), minlength=count + 1)
    out = []
    for i, box in enumerate(ndimage.find_objects(labels.values), start=1):
        lat = grid.origin_lat - (row_sum[i] / sizes[i] + 0.5) * grid.res_deg
        lon = grid.origin_lon + (col_sum[i] / sizes[i] + 0.5) * grid.res_deg
        out.append(DisagreementArea(kind, 0, int(sizes[i]), float(area[i]),
                                    (box[0].start, box[1].start, box[0].stop - 1, box[1].stop - 1), (lat, lon)))
    return out


def cross_compare(a: Raster, b: Raster, c: Raster, top_n: int = DEFAULT_TOP_N):
    """一致性直方图，以及 A 与 B、C 都不一致的最大区域

    返回 (AgreementTable, [DisagreementArea])；区域按 8 邻接连通，
    按格子数排序（同数再按面积、位置），最多 top_n 个。
    """
    codes, valid = agreement_codes(a, b, c)
    grid = a.grid
    areas = np.broadcast_to(row_areas_km2(grid)[:, None], grid.shape)
    counts = np.bincount(codes[valid], minlength=8)
    area = np.bincount(codes[valid], weights=areas[valid], minlength=8)
    table = AgreementTable(counts, area)

    regions = (_components(valid & (codes == 4), grid, A_ONLY_POSITIVE)
               + _components(valid & (codes == 3), grid, A_ONLY_NEGATIVE))
    regions.sort(key=lambda d: (-d.cells, -d.area_km2, d.bbox, d.kind))
    regions = regions[:top_n]
    for rank, region in enumerate(regions, start=1):
        region.rank = rank
    return table, regions


@dataclass
class CoincidenceResult:
    radius_m: float
    distances_km: np.ndarray
    matched: np.ndarray

    @property
    def fraction(self) -> float:
        return float(self.matched.mean())

    @property
    def matched_count(self) -> int:
        return int(self.matched.sum())


def household_coincidence(points: Sequence[GeoPoint], built: Raster, radius_m: float = 100.0) -> CoincidenceResult:
    """距某个定居格中心不超过 radius_m 的调查点比例"""
    if radius_m < 0:
        raise ValueError(f"radius_m must be >= 0, got {radius_m}")
    if len(points) == 0:
        raise ValueError("household_coincidence needs at least one point")
    lats = np.array([p.lat for p in points], dtype=np.float64)
    lons = np.array([p.lon for p in points], dtype=np.float64)
    dist = nearest_distance_km(lats, lons, built)
    return CoincidenceResult(radius_m, dist, dist * 1000.0 <= radius_m)


@dataclass
class RegionScore:
    factor: int
    counts: ConfusionCounts
    recall: Optional[float] = None
    precision: Optional[float] = None
    region_cells: int = 0


def region_recall(pred: Raster, truth: Raster, factor: int = 2, region: Optional[Raster] = None) -> RegionScore:
    """两个图层按 factor 取最大值聚合后的召回率（及精确率）

    给定 region 时只统计与区域掩膜相交的粗格子。
    """
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    rasters = [pred, truth] + ([region] if region is not None else [])
    require_same_grid(*rasters)
    p = aggregate(pred.with_values(pred.as_bool().astype(np.uint8)), factor, "max")
    t = aggregate(truth.with_values(truth.as_bool().astype(np.uint8)), factor, "max")
    scope = p.valid_mask() & t.valid_mask()
    if region is not None:
        r = aggregate(region.with_values(region.as_bool().astype(np.uint8)), factor, "max")
        scope &= r.as_bool()
    counts = confusion_counts(p.as_bool()[scope], t.as_bool()[scope])
    return RegionScore(factor, counts, counts.recall, counts.precision, int(scope.sum()))
