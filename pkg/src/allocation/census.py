"""人口普查表、行政单元栅格与嵌套关系"""
from dataclasses import dataclass
from typing import Dict, Iterable

import numpy as np
import pandas as pd

from ..geo.grid import Raster
from ..utils.errors import CensusMismatchError
from ..utils.path_utils import PathUtils

CENSUS_COLUMNS = ["unit_id", "population"]
NESTING_COLUMNS = ["fine_id", "coarse_id"]


@dataclass
class CensusTable:
    """普查表：单元编号 -> 人口（非负）

    populations 是以 unit_id 为索引、按编号排序的 pandas Series。
    """
    populations: pd.Series

    def __post_init__(self):
        s = pd.Series(self.populations, dtype=np.float64)
        s.index = s.index.astype(np.int64)
        s.index.name = "unit_id"
        s.name = "population"
        if s.index.has_duplicates:
            dupes = sorted(set(s.index[s.index.duplicated()].tolist()))
            raise ValueError(f"duplicate unit_id in census table: {dupes}")
        if s.isna().any() or (s < 0).any():
            bad = s.index[s.isna() | (s < 0)].tolist()
            raise ValueError(f"census populations must be non-negative numbers, bad units: {bad}")
        self.populations = s.sort_index()

    @classmethod
    def from_dict(cls, data: Dict[int, float]) -> "CensusTable":
        return cls(pd.Series(data, dtype=np.float64))

    @property
    def unit_ids(self) -> np.ndarray:
        return self.populations.index.to_numpy()

    @property
    def total(self) -> float:
        return float(self.populations.sum())

    def __len__(self) -> int:
        return len(self.populations)

    def __contains__(self, unit_id) -> bool:
        return int(unit_id) in self.populations.index

    def population(self, unit_id) -> float:
        return float(self.populations.loc[int(unit_id)])

    def scaled(self, k: float) -> "CensusTable":
        return CensusTable(self.populations * k)


def read_census_csv(path) -> CensusTable:
    """读取普查 CSV（表头 unit_id,population）"""
    df = pd.read_csv(path)
    missing = [c for c in CENSUS_COLUMNS if c not in df.columns]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    return CensusTable(pd.Series(df["population"].to_numpy(dtype=np.float64),
                                 index=df["unit_id"].to_numpy(dtype=np.int64)))


def write_census_csv(census: CensusTable, path) -> None:
    PathUtils.ensure_parent(path)
    census.populations.reset_index().to_csv(path, index=False, columns=CENSUS_COLUMNS, float_format="%.17g")


def admin_ids(admin: Raster) -> np.ndarray:
    """每个格子的整数单元编号，覆盖范围外为 -1"""
    valid = admin.valid_mask()
    ids = np.where(valid, admin.values, -1)
    if ids.dtype.kind == "f":
        if not np.all(np.equal(np.mod(ids[valid], 1), 0)):
            raise ValueError("admin raster holds non-integer unit ids")
        ids = ids.astype(np.int64)
    return ids.astype(np.int64)


def check_admin(census: CensusTable, admin: Raster) -> np.ndarray:
    """admin 每个格子的单元编号；每个编号都必须在普查表中出现"""
    ids = admin_ids(admin)
    present = np.unique(ids[ids >= 0])
    missing = np.setdiff1d(present, census.unit_ids)
    if len(missing):
        raise CensusMismatchError(missing.tolist())
    return ids


def read_nesting_csv(path) -> Dict[int, int]:
    """细级编号 -> 粗级编号"""
    df = pd.read_csv(path)
    missing = [c for c in NESTING_COLUMNS if c not in df.columns]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    if df["fine_id"].duplicated().any():
        raise ValueError(f"{path}: fine unit listed under more than one coarse unit")
    return dict(zip(df["fine_id"].astype(np.int64).tolist(), df["coarse_id"].astype(np.int64).tolist()))


def write_nesting_csv(pairs: Iterable, path) -> None:
    PathUtils.ensure_parent(path)
    df = pd.DataFrame(sorted((int(f), int(c)) for f, c in pairs), columns=NESTING_COLUMNS)
    df.to_csv(path, index=False)
