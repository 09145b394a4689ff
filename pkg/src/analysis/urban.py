"""约 1 km 格网上的城市聚集区，以及人口到聚集区的距离分布"""
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np
import pandas as pd

from ..geo.distance import distance_to_mask_km
from ..geo.grid import GeoGrid, Raster, row_areas_km2
from ..geo.raster_ops import aggregate, connected_components
from ..utils.path_utils import PathUtils

DEFAULT_DENSITY_MIN = 300.0
DEFAULT_POP_MIN = 5000.0
KM_FACTOR = 30
PERCENTILES = (0.90, 0.95, 0.99)
# 浮点累计误差容限
CDF_TOLERANCE = 1e-9


@dataclass(frozen=True)
class UrbanCluster:
    cluster_id: int
    population: float
    cells: int


@dataclass
class ClusterMap:
    """城市聚类结果

    labels: km 级网格上的聚类编号（0 = 农村）
    km_population: 聚合到 km 级网格的人口
    """
    km_grid: GeoGrid
    labels: Raster
    clusters: List[UrbanCluster]
    km_population: Raster
    km_factor: int = KM_FACTOR

    @property
    def mask(self) -> Raster:
        return self.labels.with_values((self.labels.values > 0).astype(np.uint8))

    @property
    def clustered_population(self) -> float:
        return float(sum(c.population for c in self.clusters))

    def is_empty(self) -> bool:
        return not self.clusters

    def table(self) -> pd.DataFrame:
        return pd.DataFrame([{"cluster_id": c.cluster_id, "population": c.population, "cells": c.cells}
                             for c in self.clusters], columns=["cluster_id", "population", "cells"])


def km_density(km_population: Raster) -> np.ndarray:
    """粗网格上每平方公里人数；无数据格按 0 计"""
    return km_population.filled(0.0) / row_areas_km2(km_population.grid)[:, None]


def find_urban_clusters(pop: Raster, density_min: float = DEFAULT_DENSITY_MIN, pop_min: float = DEFAULT_POP_MIN,
                        connectivity: int = 4, km_factor: int = KM_FACTOR) -> ClusterMap:
    """人口合计达到 pop_min 的连通高密度格

    pop 按 km_factor x km_factor 块求和（1 角秒格聚合到 30 角秒）；
    km_factor=1 表示输入已聚合。边缘不完整的块仍按整格面积计算密度。
    聚集区编号从 1 连续编起，按各区首个格子的栅格扫描顺序。
    """
    values = pop.filled(0.0)
    if np.any(values < 0):
        raise ValueError("population raster must be non-negative")
    km = aggregate(pop, km_factor, "sum")
    km = km.with_values(km.filled(0.0).astype(np.float64))
    km_pop = km.values
    dense = km_density(km) >= density_min

    labels, count = connected_components(km.with_values(dense.astype(np.uint8)), connectivity)
    totals = np.bincount(labels.values.ravel(), weights=km_pop.ravel(), minlength=count + 1)
    sizes = np.bincount(labels.values.ravel(), minlength=count + 1)
    keep = np.zeros(count + 1, dtype=bool)
    keep[1:] = totals[1:] >= pop_min

    remap = np.zeros(count + 1, dtype=np.int32)
    remap[keep] = np.arange(1, int(keep.sum()) + 1, dtype=np.int32)
    out = remap[labels.values]
    clusters = [UrbanCluster(int(remap[i]), float(totals[i]), int(sizes[i])) for i in np.nonzero(keep)[0]]
    return ClusterMap(km.grid, Raster(km.grid, out, None), clusters, km, km_factor)


@dataclass
class DistanceCdf:
    """人口加权的距离累积分布

    edges_km[k] = k * bin_km；cum_fraction[k] 为距离 <= edges_km[k] 的人口占比。
    """
    label: str
    bin_km: float
    edges_km: np.ndarray
    cum_fraction: np.ndarray
    bin_population: np.ndarray
    total_population: float
    percentiles: Dict[float, float] = field(default_factory=dict)

    @property
    def weighted_mass(self) -> float:
        return float(self.bin_population.sum())

    def percentile(self, p: float) -> float:
        return percentile_from_cdf(self.edges_km, self.cum_fraction, p)

    def table(self) -> pd.DataFrame:
        return pd.DataFrame({"distance_km": self.edges_km, "cum_population_fraction": self.cum_fraction})

    def percentile_table(self) -> pd.DataFrame:
        return pd.DataFrame({"p": list(self.percentiles), "distance_km": list(self.percentiles.values())})


def distance_bins(distances_km: np.ndarray, bin_km: float) -> np.ndarray:
    """每个距离的分箱号 k：满足 k * bin_km >= d 的最小 k"""
    return np.maximum(np.ceil(np.asarray(distances_km) / bin_km - CDF_TOLERANCE), 0).astype(np.int64)


def percentile_from_cdf(edges_km: np.ndarray, cum_fraction: np.ndarray, p: float) -> float:
    """累计比例首次超过 p 的距离

    恰好落在 p 分位上的人口归到下一个有人口的距离：
    95% 在 0 km、5% 在 10 km 时 d95 = 10 km。
    """
    if not len(cum_fraction):
        return float("nan")
    above = np.nonzero(cum_fraction > p + CDF_TOLERANCE)[0]
    if len(above):
        return float(edges_km[above[0]])
    # p >= 1 - tol 时取最后一个有人口的距离
    return float(edges_km[-1])


def distance_cdf(pop: Raster, clusters: ClusterMap, bin_km: float = 1.0, rural_only: bool = False,
                 percentiles: Sequence[float] = PERCENTILES) -> DistanceCdf:
    """到最近聚集区格子的距离的人口加权累计分布

    pop 可以是细栅格（按聚集区同样方式聚合），也可以已在聚集区网格上。
    聚集区内人口距离为 0；rural_only 时只统计聚集区外的格子。
    """
    if bin_km <= 0:
        raise ValueError(f"bin_km must be positive, got {bin_km}")
    if pop.grid.same_as(clusters.km_grid):
        km_pop = pop.filled(0.0).astype(np.float64)
    else:
        km_pop = aggregate(pop, clusters.km_factor, "sum").filled(0.0).astype(np.float64)
        if km_pop.shape != clusters.km_grid.shape:
            raise ValueError("population raster does not match the cluster grid")
    dist = distance_to_mask_km(clusters.km_population, clusters.mask).values

    weights = km_pop.copy()
    if rural_only:
        weights[clusters.labels.values > 0] = 0.0
    bins = distance_bins(dist, bin_km)
    populated = weights > 0
    n_bins = int(bins[populated].max()) + 1 if populated.any() else 1
    bin_pop = np.bincount(bins[populated], weights=weights[populated], minlength=n_bins)
    total = float(weights.sum())
    cum = np.cumsum(bin_pop) / total if total > 0 else np.zeros(n_bins)
    edges = np.arange(n_bins) * bin_km

    report = DistanceCdf("rural" if rural_only else "all", bin_km, edges, cum, bin_pop, total)
    report.percentiles = {float(p): (percentile_from_cdf(edges, cum, p) if total > 0 else float("nan"))
                          for p in percentiles}
    return report


def write_cdf_csv(cdf: DistanceCdf, path) -> None:
    PathUtils.ensure_parent(path)
    cdf.table().to_csv(path, index=False, float_format="%.17g")


def write_percentiles_csv(cdf: DistanceCdf, path) -> None:
    PathUtils.ensure_parent(path)
    cdf.percentile_table().to_csv(path, index=False, float_format="%.17g")


def write_cluster_table(clusters: ClusterMap, path) -> None:
    PathUtils.ensure_parent(path)
    clusters.table().to_csv(path, index=False, float_format="%.17g")
