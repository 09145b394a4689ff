"""把普查人口按分区密度法分配到定居格上"""
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ..geo.grid import Raster, require_same_grid
from ..utils.errors import ConservationError
from .census import CensusTable, check_admin

METHODS = ("uniform", "fractional")
UNALLOCATED_COLUMNS = ["unit_id", "population", "settled_cells"]
CONSERVATION_TOLERANCE = 1e-9


@dataclass
class AllocationResult:
    """分配结果

    population: 每个栅格的人口（实数）
    unit_totals: 每个普查单元实际分配到栅格上的人口
    unallocated: 人口 > 0 但没有定居栅格的单元（unit_id,population,settled_cells）
    """
    method: str
    population: Raster
    census: CensusTable
    unit_totals: pd.Series
    settled_cells: pd.Series
    unallocated: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=UNALLOCATED_COLUMNS))

    def conservation_table(self) -> pd.DataFrame:
        """分到人口的单元：普查总数与分配总数对照"""
        census = self.census.populations
        allocated = self.unit_totals.reindex(census.index, fill_value=0.0)
        df = pd.DataFrame({"census": census, "allocated": allocated,
                           "settled_cells": self.settled_cells.reindex(census.index, fill_value=0)})
        df = df[df["settled_cells"] > 0].copy()
        c = df["census"].to_numpy()
        a = df["allocated"].to_numpy()
        diff = np.abs(a - c)
        rel = np.divide(diff, c, out=np.where(diff == 0, 0.0, np.inf), where=c > 0)
        df["relative_error"] = rel
        df.index.name = "unit_id"
        return df.reset_index()

    def max_relative_error(self) -> float:
        table = self.conservation_table()
        return float(table["relative_error"].max()) if len(table) else 0.0

    def check_conservation(self, tolerance: float = CONSERVATION_TOLERANCE) -> float:
        err = self.max_relative_error()
        if not err <= tolerance:
            raise ConservationError(err)
        return err


def _allocate(census: CensusTable, admin: Raster, weights: Raster, method: str) -> AllocationResult:
    grid = require_same_grid(admin, weights)
    ids = check_admin(census, admin)
    covered = ids >= 0
    w = np.where(covered, weights.filled(0.0), 0.0).astype(np.float64)

    units = census.unit_ids
    pop = census.populations.to_numpy()
    inverse = np.searchsorted(units, ids[covered])
    cell_w = w[covered]
    weight_sum = np.bincount(inverse, weights=cell_w, minlength=len(units))
    settled = np.bincount(inverse[cell_w > 0], minlength=len(units))

    share = np.zeros_like(cell_w)
    has_weight = cell_w > 0
    share[has_weight] = cell_w[has_weight] / weight_sum[inverse[has_weight]]
    out = np.zeros(grid.shape, dtype=np.float64)
    out[covered] = pop[inverse] * share

    unit_totals = pd.Series(np.bincount(inverse, weights=out[covered], minlength=len(units)), index=units)
    settled_cells = pd.Series(settled, index=units)
    stranded = (pop > 0) & (settled == 0)
    unallocated = pd.DataFrame({"unit_id": units[stranded], "population": pop[stranded],
                                "settled_cells": settled[stranded]}, columns=UNALLOCATED_COLUMNS)
    return AllocationResult(method, Raster(grid, out, None), census, unit_totals, settled_cells, unallocated)


def allocate_uniform(census: CensusTable, admin: Raster, built: Raster) -> AllocationResult:
    """方法一：单元人口平均分给它的定居格"""
    if not built.is_binary():
        raise ValueError("allocate_uniform expects a binary settlement raster")
    return _allocate(census, admin, built.with_values(built.as_bool().astype(np.float64)), "uniform")


def allocate_fractional(census: CensusTable, admin: Raster, built_frac: Raster) -> AllocationResult:
    """方法二：按每格建成比例分配人口"""
    vals = built_frac.filled(0.0)
    if np.any(vals < 0) or np.any(vals > 1) or np.any(np.isnan(vals)):
        raise ValueError("built fractions must lie in [0, 1]")
    return _allocate(census, admin, built_frac.with_values(vals.astype(np.float64)), "fractional")


def allocate(census: CensusTable, admin: Raster, built: Raster, method: str) -> AllocationResult:
    if method == "uniform":
        return allocate_uniform(census, admin, built)
    if method == "fractional":
        return allocate_fractional(census, admin, built)
    raise ValueError(f"unknown allocation method {method!r}, expected one of {METHODS}")
