"""检测到的直线周围的定长图块窗口，以及图块语料的存储格式"""
from dataclasses import dataclass, field
import os
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..geo.grid import GeoPoint
from ..utils.path_utils import PathUtils
from .edges import LineSegment
from .imagery import ImageTile, read_pgm, write_pgm

PATCH_SIZE = 64
SEGMENT_SIZE = 256
LABEL_NAMES = {1: "building", 0: "no_building"}
UNLABELED = -1
MANIFEST_COLUMNS = ["patch_id", "lat", "lon", "win_row", "win_col", "label"]


@dataclass
class Patch:
    pixels: np.ndarray
    geo_anchor: GeoPoint
    label: Optional[bool] = None
    window: Tuple[int, int] = (0, 0)


@dataclass
class PatchSet:
    """等尺寸图块的堆叠

    windows 是每个图块在其影像块内的 (row, col) 窗口编号；labels 取
    1/0 表示 building/no_building，未知为 -1。
    """
    size: int = PATCH_SIZE
    pixels: np.ndarray = field(default_factory=lambda: np.zeros((0, PATCH_SIZE, PATCH_SIZE)))
    anchors: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    windows: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int8))

    def __post_init__(self):
        n = len(self.pixels)
        if self.pixels.shape[1:] != (self.size, self.size) and n:
            raise ValueError(f"patches must be {self.size}x{self.size}, got {self.pixels.shape[1:]}")
        if not (len(self.anchors) == len(self.windows) == len(self.labels) == n):
            raise ValueError("patch arrays have inconsistent lengths")

    def __len__(self) -> int:
        return len(self.pixels)

    def __iter__(self) -> Iterator[Patch]:
        for i in range(len(self)):
            label = None if self.labels[i] == UNLABELED else bool(self.labels[i])
            yield Patch(self.pixels[i], GeoPoint(float(self.anchors[i, 0]), float(self.anchors[i, 1])),
                        label, (int(self.windows[i, 0]), int(self.windows[i, 1])))

    def tensors(self) -> np.ndarray:
        """(N, 1, size, size) 的 float64 批量"""
        return self.pixels[:, None, :, :].astype(np.float64)

    def is_labeled(self) -> bool:
        return bool(len(self)) and bool(np.all(self.labels != UNLABELED))

    @classmethod
    def from_patches(cls, patches: Sequence[Patch], size: int = PATCH_SIZE) -> "PatchSet":
        if not patches:
            return cls(size=size, pixels=np.zeros((0, size, size)))
        return cls(
            size=size,
            pixels=np.stack([p.pixels for p in patches]).astype(np.float64),
            anchors=np.array([[p.geo_anchor.lat, p.geo_anchor.lon] for p in patches]),
            windows=np.array([p.window for p in patches], dtype=np.int64),
            labels=np.array([UNLABELED if p.label is None else int(p.label) for p in patches], dtype=np.int8),
        )


def window_counts(tile: ImageTile, size: int = PATCH_SIZE) -> Tuple[int, int]:
    return tile.height // size, tile.width // size


def extract_window(tile: ImageTile, window: Tuple[int, int], size: int = PATCH_SIZE) -> Patch:
    r0, c0 = window[0] * size, window[1] * size
    lat, lon = tile.grid.cell_center(r0, c0)
    return Patch(tile.pixels[r0:r0 + size, c0:c0 + size].copy(), GeoPoint(lat, lon), None, tuple(window))


def candidate_patches(tile: ImageTile, segments: List[LineSegment], size: int = PATCH_SIZE) -> PatchSet:
    """每个包含线段中点的对齐窗口取一个图块

    落在最后一个完整窗口之外边缘条带的中点归入最后一个窗口。输出去重，
    按窗口行优先排序。
    """
    if tile.height < size or tile.width < size:
        raise ValueError(f"tile {tile.height}x{tile.width} smaller than patch {size}x{size}")
    n_rows, n_cols = window_counts(tile, size)
    windows = set()
    for seg in segments:
        mr, mc = seg.midpoint
        wr = min(int(mr) // size, n_rows - 1)
        wc = min(int(mc) // size, n_cols - 1)
        windows.add((wr, wc))
    return PatchSet.from_patches([extract_window(tile, w, size) for w in sorted(windows)], size)


def data_reduction(patches: PatchSet, tile: ImageTile, size: int = PATCH_SIZE) -> float:
    """影像块中被保留为候选的窗口比例"""
    n_rows, n_cols = window_counts(tile, size)
    return len(patches) / float(n_rows * n_cols)


def save_corpus(patches: PatchSet, directory) -> str:
    """写出每个图块的 PGM 文件与 manifest.csv（patch_id,lat,lon,win_row,win_col,label）"""
    PathUtils.ensure_dir(directory)
    rows = []
    for i, patch in enumerate(patches):
        patch_id = f"p{i:06d}"
        write_pgm(patch.pixels, os.path.join(directory, f"{patch_id}.pgm"))
        label = "" if patch.label is None else LABEL_NAMES[int(patch.label)]
        rows.append({"patch_id": patch_id, "lat": patch.geo_anchor.lat, "lon": patch.geo_anchor.lon,
                     "win_row": patch.window[0], "win_col": patch.window[1], "label": label})
    manifest = os.path.join(directory, "manifest.csv")
    pd.DataFrame(rows, columns=MANIFEST_COLUMNS).to_csv(manifest, index=False, float_format="%.10f")
    return manifest


def load_corpus(directory, size: int = PATCH_SIZE) -> PatchSet:
    """读取 save_corpus 写出的语料；旧清单没有窗口列时窗口记为 (0, 0)"""
    manifest = pd.read_csv(os.path.join(directory, "manifest.csv"), dtype={"patch_id": str, "label": str},
                           keep_default_na=False)
    has_windows = {"win_row", "win_col"} <= set(manifest.columns)
    codes = {name: code for code, name in LABEL_NAMES.items()}
    patches = []
    for row in manifest.itertuples(index=False):
        pixels = read_pgm(os.path.join(directory, f"{row.patch_id}.pgm"))
        label = codes.get(row.label)
        window = (int(row.win_row), int(row.win_col)) if has_windows else (0, 0)
        patches.append(Patch(pixels, GeoPoint(float(row.lat), float(row.lon)),
                             None if label is None else bool(label), window))
    return PatchSet.from_patches(patches, size)
