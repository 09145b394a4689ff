"""以嵌套的细级普查单元衡量分配误差"""
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
import pandas as pd

from ..geo.grid import Raster, require_same_grid
from ..utils.errors import HierarchyError
from .allocate import AllocationResult, allocate
from .census import CensusTable, check_admin

UNIT_COLUMNS = ["unit_id", "coarse_id", "truth", "estimate", "ratio", "log_ratio", "urban"]


def log_ratio_spread(log_ratios, weights=None) -> float:
    """总体标准差（ddof=0），可加权"""
    log_ratios = np.asarray(log_ratios, dtype=np.float64)
    if len(log_ratios) == 0:
        return float("nan")
    if weights is None:
        return float(np.std(log_ratios))
    weights = np.asarray(weights, dtype=np.float64)
    mean = np.average(log_ratios, weights=weights)
    return float(np.sqrt(np.average((log_ratios - mean) ** 2, weights=weights)))


@dataclass
class ErrorSummary:
    units: int
    std_log_ratio: float
    error_factor: float
    weighted_std_log_ratio: float
    weighted_error_factor: float

    @classmethod
    def from_units(cls, df: pd.DataFrame) -> "ErrorSummary":
        std = log_ratio_spread(df["log_ratio"])
        wstd = log_ratio_spread(df["log_ratio"], df["truth"]) if len(df) else float("nan")
        return cls(len(df), std, float(np.exp(std)), wstd, float(np.exp(wstd)))

    def to_dict(self) -> dict:
        return {"units": self.units, "std_log_ratio": self.std_log_ratio, "error_factor": self.error_factor,
                "weighted_std_log_ratio": self.weighted_std_log_ratio,
                "weighted_error_factor": self.weighted_error_factor}


@dataclass
class UncertaintyReport:
    """误差报告

    units 中每个细级单元一行；ratio/log_ratio 只对 truth > 0 且 estimate > 0
    的单元有定义。error_factor = exp(std(log_ratio))，未加权；
    weighted_* 以真实人口加权。
    """
    method: str
    units: pd.DataFrame
    overall: ErrorSummary
    zero_estimate_units: int
    zero_truth_units: int
    split: Dict[str, ErrorSummary] = field(default_factory=dict)
    allocation: Optional[AllocationResult] = None

    @property
    def error_factor(self) -> float:
        return self.overall.error_factor

    @property
    def std_log_ratio(self) -> float:
        return self.overall.std_log_ratio

    def summary(self) -> dict:
        out = {"method": self.method, "zero_estimate_units": self.zero_estimate_units,
               "zero_truth_units": self.zero_truth_units, **self.overall.to_dict()}
        for name, part in self.split.items():
            out[name] = part.to_dict()
        return out


def validate_nesting(coarse_ids: np.ndarray, fine_ids: np.ndarray, nesting: Optional[Dict[int, int]] = None):
    """每个细级单元所属的粗级单元；有跨界格子时抛出 HierarchyError

    细级单元的上级取其格子中最常见的粗级编号（并列取较小者）；
    落在上级之外的格子以及没有粗级覆盖的细格都算违规。
    """
    covered = fine_ids >= 0
    rows, cols = np.nonzero(covered)
    pairs = pd.DataFrame({"fine": fine_ids[covered], "coarse": coarse_ids[covered], "row": rows, "col": cols})
    counts = pairs[pairs["coarse"] >= 0].groupby(["fine", "coarse"]).size().reset_index(name="n")
    counts = counts.sort_values(["fine", "n", "coarse"], ascending=[True, False, True], kind="mergesort")
    parent = counts.drop_duplicates("fine").set_index("fine")["coarse"]

    expected = pairs["fine"].map(parent)
    bad = pairs[(pairs["coarse"] < 0) | (pairs["coarse"] != expected)]
    if nesting is not None:
        declared = pairs["fine"].map(lambda f: nesting.get(int(f), -1))
        bad = pd.concat([bad, pairs[declared != expected]]).drop_duplicates(["row", "col"])
    if len(bad):
        cells = sorted(zip(bad["row"].astype(int).tolist(), bad["col"].astype(int).tolist()))
        raise HierarchyError(cells)
    return {int(f): int(c) for f, c in parent.items()}


def _urban_units(fine_ids: np.ndarray, urban_mask: Raster) -> pd.Series:
    covered = fine_ids >= 0
    frame = pd.DataFrame({"fine": fine_ids[covered], "urban": urban_mask.as_bool()[covered]})
    return frame.groupby("fine")["urban"].mean() >= 0.5


def estimate_uncertainty(coarse_census: CensusTable, coarse_admin: Raster,
                         fine_census: CensusTable, fine_admin: Raster,
                         built: Raster, method: str = "uniform",
                         nesting: Optional[Dict[int, int]] = None,
                         urban_mask: Optional[Raster] = None) -> UncertaintyReport:
    """在粗级分配人口，再把每个细级单元内的合计与其普查数比较

    urban_mask（同网格的二值栅格）把统计拆成城市与农村两部分；
    单元内至少一半格子属于城市时记为城市单元。
    """
    rasters = [coarse_admin, fine_admin, built] + ([urban_mask] if urban_mask is not None else [])
    require_same_grid(*rasters)
    coarse_ids = check_admin(coarse_census, coarse_admin)
    fine_ids = check_admin(fine_census, fine_admin)
    parent = validate_nesting(coarse_ids, fine_ids, nesting)

    result = allocate(coarse_census, coarse_admin, built, method)
    covered = fine_ids >= 0
    units = fine_census.unit_ids
    inverse = np.searchsorted(units, fine_ids[covered])
    estimate = np.bincount(inverse, weights=result.population.values[covered], minlength=len(units))
    truth = fine_census.populations.to_numpy()

    df = pd.DataFrame({"unit_id": units, "coarse_id": [parent.get(int(u), -1) for u in units],
                       "truth": truth, "estimate": estimate})
    defined = (df["truth"] > 0) & (df["estimate"] > 0)
    df["ratio"] = np.where(defined, df["estimate"] / df["truth"].where(defined, 1.0), np.nan)
    df["log_ratio"] = np.log(df["ratio"])
    if urban_mask is not None:
        df["urban"] = df["unit_id"].map(_urban_units(fine_ids, urban_mask)).fillna(False).astype(bool)
    else:
        df["urban"] = False
    df = df[UNIT_COLUMNS]

    scored = df[defined]
    split = {}
    if urban_mask is not None:
        split = {"urban": ErrorSummary.from_units(scored[scored["urban"]]),
                 "rural": ErrorSummary.from_units(scored[~scored["urban"]])}
    return UncertaintyReport(
        method=method,
        units=df,
        overall=ErrorSummary.from_units(scored),
        zero_estimate_units=int(((df["truth"] > 0) & (df["estimate"] == 0)).sum()),
        zero_truth_units=int((df["truth"] == 0).sum()),
        split=split,
        allocation=result,
    )
