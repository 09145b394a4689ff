"""合成真值：建筑、影像块、普查层级与住户

每个建筑栅格放一栋建筑，并围绕每个区域条带的若干聚落中心聚集。
影像按块用各自的随机流延迟渲染，任一影像块都可以单独重新生成。
"""
from dataclasses import dataclass, field
import json
import math
import os
from typing import Dict, Iterator, List, Tuple

import numpy as np
from scipy import ndimage

from ..allocation.census import CensusTable, write_census_csv, write_nesting_csv
from ..geo.ascii_grid import write_grid_ascii, write_points_csv
from ..geo.grid import EARTH_RADIUS_KM, GeoPoint, Raster
from ..prefilter.imagery import ImageTile, write_tile
from ..prefilter.patches import PatchSet
from ..utils.path_utils import PathUtils
from .worldspec import WorldSpec

# 随机数流编号，保证各部分相互独立
STREAM_PLACEMENT = 1
STREAM_CENSUS = 2
STREAM_HOUSEHOLDS = 3
STREAM_REFERENCE = 4
STREAM_TILE = 5
STREAM_CORPUS = 6

TEXTURE_SIGMA_PX = 6.0
FINE_ID_BASE = 100


@dataclass(frozen=True)
class Building:
    """屋顶矩形，世界像素坐标（左上角行/列、高、宽）"""
    cell: Tuple[int, int]
    row: int
    col: int
    height: int
    width: int
    roof: float

    @property
    def area_px(self) -> int:
        return self.height * self.width


@dataclass
class SyntheticWorld:
    spec: WorldSpec
    buildings: List[Building]
    truth_built: Raster
    truth_fraction: Raster
    regions: Raster
    coarse_admin: Raster
    fine_admin: Raster
    coarse_census: CensusTable
    fine_census: CensusTable
    nesting: Dict[int, int]
    households: List[GeoPoint]
    reference_b: Raster
    reference_c: Raster
    _tile_cache: Dict[Tuple[int, int], ImageTile] = field(default_factory=dict, repr=False)

    @property
    def cell_grid(self):
        return self.spec.cell_grid

    def tile_shape(self) -> Tuple[int, int]:
        """影像块的行数与列数（边缘不足一块时形成较小的块）"""
        tc = self.spec.tile_cells
        return -(-self.spec.rows // tc), -(-self.spec.cols // tc)

    def tile_window(self, ti: int, tj: int) -> Tuple[int, int, int, int]:
        """影像块以栅格计的 (row0, col0, rows, cols)"""
        tc = self.spec.tile_cells
        row0, col0 = ti * tc, tj * tc
        return row0, col0, min(tc, self.spec.rows - row0), min(tc, self.spec.cols - col0)

    def tile_ids(self) -> List[Tuple[int, int]]:
        n_i, n_j = self.tile_shape()
        return [(ti, tj) for ti in range(n_i) for tj in range(n_j)]

    def render_tile(self, ti: int, tj: int) -> ImageTile:
        key = (ti, tj)
        if key not in self._tile_cache:
            self._tile_cache[key] = render_tile(self.spec, self.buildings, *self.tile_window(ti, tj), ti, tj)
        return self._tile_cache[key]

    def tiles(self) -> Iterator[Tuple[Tuple[int, int], ImageTile]]:
        for key in self.tile_ids():
            yield key, self.render_tile(*key)

    def cell_patch(self, row: int, col: int) -> np.ndarray:
        """一个栅格的像素（即一个分类图块）"""
        tc, px = self.spec.tile_cells, self.spec.px_per_cell
        tile = self.render_tile(row // tc, col // tc)
        r0, c0 = (row % tc) * px, (col % tc) * px
        return tile.pixels[r0:r0 + px, c0:c0 + px]

    def sample_corpus(self, n: int, seed: int = 0) -> PatchSet:
        """类别均衡的带标签图块：建筑栅格为正样本，无建筑栅格为负样本"""
        if n < 1:
            raise ValueError(f"corpus size must be positive, got {n}")
        rng = np.random.default_rng([self.spec.seed, STREAM_CORPUS, seed])
        built = np.flatnonzero(self.truth_built.values.ravel() == 1)
        empty = np.flatnonzero(self.truth_built.values.ravel() == 0)
        n_pos = min(len(built), n // 2 if len(empty) else n)
        n_neg = min(len(empty), n - n_pos)
        picks = [(i, 1) for i in rng.choice(built, n_pos, replace=False)] + \
                [(i, 0) for i in rng.choice(empty, n_neg, replace=False)]
        picks.sort()
        cols = self.spec.cols
        pixels, anchors, windows, labels = [], [], [], []
        for flat, label in picks:
            row, col = divmod(int(flat), cols)
            pixels.append(self.cell_patch(row, col))
            lat, lon = self.spec.pixel_grid.cell_center(row * self.spec.px_per_cell, col * self.spec.px_per_cell)
            anchors.append((lat, lon))
            windows.append((row, col))
            labels.append(label)
        px = self.spec.px_per_cell
        if not picks:
            return PatchSet(size=px, pixels=np.zeros((0, px, px)))
        return PatchSet(size=px, pixels=np.stack(pixels), anchors=np.array(anchors),
                        windows=np.array(windows, dtype=np.int64), labels=np.array(labels, dtype=np.int8))

    def save(self, directory) -> Dict[str, str]:
        """写出整个合成世界（影像、真值、普查、行政区划、住户、参考图层）"""
        PathUtils.ensure_dir(directory)
        paths = {}
        imagery_dir = os.path.join(directory, "imagery")
        PathUtils.ensure_dir(imagery_dir)
        index = {"cell_grid": self.cell_grid.to_dict(), "px_per_cell": self.spec.px_per_cell, "tiles": []}
        for (ti, tj), tile in self.tiles():
            name = f"tile_{ti}_{tj}.pgm"
            write_tile(tile, os.path.join(imagery_dir, name))
            row0, col0, rows, cols = self.tile_window(ti, tj)
            index["tiles"].append({"file": name, "ti": ti, "tj": tj, "row0": row0, "col0": col0,
                                   "rows": rows, "cols": cols})
        paths["imagery_dir"] = imagery_dir
        with open(os.path.join(imagery_dir, "index.json"), "w", encoding="utf-8") as f:
            json.dump(index, f, indent=2)

        rasters = {"truth_built": self.truth_built, "truth_fraction": self.truth_fraction,
                   "regions": self.regions, "admin_coarse": self.coarse_admin, "admin_fine": self.fine_admin,
                   "reference_b": self.reference_b, "reference_c": self.reference_c,
                   "region_mask": self.regions.with_values((self.regions.values == 1).astype(np.int64))}
        for name, raster in rasters.items():
            paths[name] = os.path.join(directory, f"{name}.asc")
            write_grid_ascii(raster, paths[name])
        paths["census_coarse"] = os.path.join(directory, "census_coarse.csv")
        write_census_csv(self.coarse_census, paths["census_coarse"])
        paths["census_fine"] = os.path.join(directory, "census_fine.csv")
        write_census_csv(self.fine_census, paths["census_fine"])
        paths["nesting_map"] = os.path.join(directory, "nesting.csv")
        write_nesting_csv(self.nesting.items(), paths["nesting_map"])
        paths["households"] = os.path.join(directory, "households.csv")
        write_points_csv(self.households, paths["households"])
        paths["worldspec"] = os.path.join(directory, "worldspec.env")
        self.spec.write(paths["worldspec"])
        return paths


def region_bands(spec: WorldSpec) -> np.ndarray:
    """每一行栅格的区域编号（从 1 开始，自北向南）"""
    n = len(spec.density_list())
    bands = np.zeros(spec.rows, dtype=np.int64)
    for i in range(n):
        bands[i * spec.rows // n:(i + 1) * spec.rows // n] = i + 1
    return bands


def _place_built_cells(spec: WorldSpec, rng) -> np.ndarray:
    built = np.zeros((spec.rows, spec.cols), dtype=bool)
    bands = region_bands(spec)
    rows, cols = np.indices((spec.rows, spec.cols))
    for region, density in enumerate(spec.density_list(), start=1):
        in_region = np.flatnonzero(bands[rows.ravel()] == region)
        n_built = int(round(density * len(in_region)))
        if n_built == 0:
            continue
        seeds = rng.choice(in_region, max(1, spec.settlements_per_region), replace=True)
        r, c = rows.ravel()[in_region], cols.ravel()[in_region]
        d2 = np.full(len(in_region), np.inf)
        for s in seeds:
            d2 = np.minimum(d2, (r - rows.ravel()[s]) ** 2 + (c - cols.ravel()[s]) ** 2)
        spread = max(spec.settlement_spread, 1e-6)
        weight = np.exp(-d2 / (2.0 * spread * spread)) + 1e-3
        chosen = rng.choice(in_region, n_built, replace=False, p=weight / weight.sum())
        built.ravel()[chosen] = True
    return built


def _make_buildings(spec: WorldSpec, built: np.ndarray, rng) -> List[Building]:
    px, m, sh = spec.px_per_cell, spec.margin_px, spec.shadow_px
    buildings = []
    for row, col in zip(*np.nonzero(built)):
        h = int(rng.integers(spec.building_min_px, spec.building_max_px + 1))
        w = int(rng.integers(spec.building_min_px, spec.building_max_px + 1))
        r0 = int(rng.integers(m, px - m - sh - h + 1))
        c0 = int(rng.integers(m, px - m - sh - w + 1))
        roof = float(rng.uniform(spec.roof_min, spec.roof_max))
        buildings.append(Building((int(row), int(col)), int(row) * px + r0, int(col) * px + c0, h, w, roof))
    return buildings


def render_tile(spec: WorldSpec, buildings: List[Building], row0: int, col0: int, rows: int, cols: int,
                ti: int = 0, tj: int = 0) -> ImageTile:
    """先画纹理背景，再画阴影条（南侧与东侧），最后画屋顶"""
    px = spec.px_per_cell
    rng = np.random.default_rng([spec.seed, STREAM_TILE, ti, tj])
    h, w = rows * px, cols * px
    texture = ndimage.gaussian_filter(rng.standard_normal((h, w)), TEXTURE_SIGMA_PX, mode="reflect")
    scale = texture.std()
    if scale > 0:
        texture /= scale
    pixels = spec.background + spec.texture * texture + spec.noise * rng.standard_normal((h, w))

    top, left = row0 * px, col0 * px
    sh = spec.shadow_px
    for b in buildings:
        r, c = b.row - top, b.col - left
        if not (0 <= b.cell[0] - row0 < rows and 0 <= b.cell[1] - col0 < cols):
            continue
        pixels[r + b.height:r + b.height + sh, c + sh:c + b.width + sh] = spec.shadow_level
        pixels[r + sh:r + b.height + sh, c + b.width:c + b.width + sh] = spec.shadow_level
        pixels[r:r + b.height, c:c + b.width] = b.roof
    grid = spec.pixel_grid.subgrid(top, left, h, w)
    return ImageTile(grid, np.clip(pixels, 0.0, 1.0))


def _admin_units(spec: WorldSpec):
    """粗级矩形块及其纵向细级条带，返回 (粗级编号, 细级编号, 嵌套关系)"""
    coarse = np.zeros((spec.rows, spec.cols), dtype=np.int64)
    fine = np.zeros((spec.rows, spec.cols), dtype=np.int64)
    nesting = {}
    row_blocks = np.array_split(np.arange(spec.rows), spec.coarse_rows)
    col_blocks = np.array_split(np.arange(spec.cols), spec.coarse_cols)
    unit = 0
    for rb in row_blocks:
        for cb in col_blocks:
            unit += 1
            coarse[np.ix_(rb, cb)] = unit
            for j, strip in enumerate(np.array_split(cb, spec.fine_per_coarse), start=1):
                fine_id = unit * FINE_ID_BASE + j
                fine[np.ix_(rb, strip)] = fine_id
                nesting[fine_id] = unit
    return coarse, fine, nesting


def _census(spec: WorldSpec, fine: np.ndarray, nesting: Dict[int, int], area_px: np.ndarray, rng):
    fine_pop = {}
    for fine_id in sorted(nesting):
        area = float(area_px[fine == fine_id].sum())
        jitter = rng.lognormal(0.0, spec.jitter_sigma) if spec.jitter_sigma > 0 else 1.0
        fine_pop[fine_id] = float(round(spec.people_per_px * area * jitter))
    coarse_pop = {}
    for fine_id, coarse_id in sorted(nesting.items()):
        coarse_pop[coarse_id] = coarse_pop.get(coarse_id, 0.0) + fine_pop[fine_id]
    return CensusTable.from_dict(coarse_pop), CensusTable.from_dict(fine_pop)


def _households(spec: WorldSpec, buildings: List[Building], rng) -> List[GeoPoint]:
    if not buildings or spec.households == 0:
        return []
    areas = np.array([b.area_px for b in buildings], dtype=np.float64)
    picks = rng.choice(len(buildings), spec.households, replace=True, p=areas / areas.sum())
    radius_km = spec.household_jitter_m / 1000.0
    points = []
    grid = spec.cell_grid
    for i in picks:
        lat, lon = grid.cell_center(*buildings[i].cell)
        r = radius_km * math.sqrt(rng.uniform())
        theta = rng.uniform(0.0, 2.0 * math.pi)
        dlat = math.degrees(r * math.sin(theta) / EARTH_RADIUS_KM)
        dlon = math.degrees(r * math.cos(theta) / (EARTH_RADIUS_KM * math.cos(math.radians(lat))))
        points.append(GeoPoint(lat + dlat, lon + dlon))
    return points


def _references(built: np.ndarray, dropout: float, rng) -> Tuple[np.ndarray, np.ndarray]:
    """两个不完美的参考图层：随机丢弃，以及整体向东平移一个栅格"""
    b = built & (rng.uniform(size=built.shape) >= dropout)
    c = np.zeros_like(built)
    c[:, 1:] = built[:, :-1]
    return b.astype(np.int64), c.astype(np.int64)


def generate(spec: WorldSpec) -> SyntheticWorld:
    """生成完全由 spec 决定的世界（影像按需渲染）"""
    grid = spec.cell_grid
    built = _place_built_cells(spec, np.random.default_rng([spec.seed, STREAM_PLACEMENT]))
    buildings = _make_buildings(spec, built, np.random.default_rng([spec.seed, STREAM_PLACEMENT, 1]))

    area_px = np.zeros(grid.shape, dtype=np.float64)
    for b in buildings:
        area_px[b.cell] = b.area_px
    fraction = area_px / float(spec.px_per_cell ** 2)

    coarse, fine, nesting = _admin_units(spec)
    coarse_census, fine_census = _census(spec, fine, nesting, area_px,
                                         np.random.default_rng([spec.seed, STREAM_CENSUS]))
    households = _households(spec, buildings, np.random.default_rng([spec.seed, STREAM_HOUSEHOLDS]))
    ref_b, ref_c = _references(built, spec.reference_dropout, np.random.default_rng([spec.seed, STREAM_REFERENCE]))
    regions = np.repeat(region_bands(spec)[:, None], spec.cols, axis=1)

    return SyntheticWorld(
        spec=spec,
        buildings=buildings,
        truth_built=Raster(grid, (fraction > 0).astype(np.int64)),
        truth_fraction=Raster(grid, fraction),
        regions=Raster(grid, regions),
        coarse_admin=Raster(grid, coarse),
        fine_admin=Raster(grid, fine),
        coarse_census=coarse_census,
        fine_census=fine_census,
        nesting=nesting,
        households=households,
        reference_b=Raster(grid, ref_b),
        reference_c=Raster(grid, ref_c),
    )
