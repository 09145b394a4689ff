"""ASCII 栅格与点位 CSV 的读写

ASCII 栅格格式::

    ncols <int>
    nrows <int>
    xllcorner <float>
    yllcorner <float>
    cellsize <float, decimal degrees>
    NODATA_value <float>
    <nrows 行，每行 ncols 个值，最北一行在前>
"""
import math
from typing import List

import numpy as np
import pandas as pd

from ..utils.errors import GridFormatError
from ..utils.path_utils import PathUtils
from .grid import ARCSEC_PER_DEGREE, GeoGrid, GeoPoint, Raster

HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")
DEFAULT_NODATA = -9999


def write_grid_ascii(r: Raster, path) -> None:
    grid = r.grid
    integer = r.values.dtype.kind in "iub"
    nodata = DEFAULT_NODATA if r.nodata is None else r.nodata
    PathUtils.ensure_parent(path)
    with open(path, "w", encoding="ascii") as f:
        f.write(f"ncols {grid.cols}\n")
        f.write(f"nrows {grid.rows}\n")
        f.write(f"xllcorner {grid.origin_lon!r}\n")
        f.write(f"yllcorner {grid.south_lat!r}\n")
        f.write(f"cellsize {grid.res_deg!r}\n")
        f.write(f"NODATA_value {_format_scalar(nodata, integer)}\n")
        fmt = "%d" if integer else "%.17g"
        np.savetxt(f, r.values.astype(np.int64) if integer else r.values, fmt=fmt, delimiter=" ")


def read_grid_ascii(path) -> Raster:
    with open(path, "r", encoding="ascii") as f:
        lines = f.read().splitlines()

    header = {}
    raw_tokens = {}
    for line_number in range(1, len(HEADER_KEYS) + 1):
        if line_number > len(lines):
            raise GridFormatError(path, line_number, "truncated header")
        parts = lines[line_number - 1].split()
        if len(parts) != 2 or parts[0].lower() not in HEADER_KEYS:
            raise GridFormatError(path, line_number, f"malformed header line {lines[line_number - 1]!r}")
        key = parts[0].lower()
        if key in header:
            raise GridFormatError(path, line_number, f"duplicate header key {parts[0]}")
        raw_tokens[key] = parts[1]
        try:
            header[key] = int(parts[1]) if key in ("ncols", "nrows") else float(parts[1])
        except ValueError:
            raise GridFormatError(path, line_number, f"bad value for {parts[0]}: {parts[1]!r}")

    ncols, nrows, cellsize = header["ncols"], header["nrows"], header["cellsize"]
    if ncols < 1 or nrows < 1 or not cellsize > 0:
        raise GridFormatError(path, 1, f"invalid dimensions {ncols}x{nrows} / cellsize {cellsize}")

    body = [(i + 1, line) for i, line in enumerate(lines) if i >= len(HEADER_KEYS) and line.strip()]
    if len(body) != nrows:
        where = body[nrows][0] if len(body) > nrows else len(lines) + 1
        raise GridFormatError(path, where, f"expected {nrows} data rows, found {len(body)}")
    # 浮点栅格写出时 NODATA_value 总是浮点形式
    text = " ".join(line for _, line in body) + " " + raw_tokens["nodata_value"]
    integer = not any(ch in text for ch in ".eEnNiI")
    dtype = np.int64 if integer else np.float64
    values = np.empty((nrows, ncols), dtype=dtype)
    for row, (line_number, line) in enumerate(body):
        tokens = line.split()
        if len(tokens) != ncols:
            raise GridFormatError(path, line_number, f"expected {ncols} values, found {len(tokens)}")
        try:
            values[row] = np.array(tokens, dtype=dtype)
        except ValueError:
            raise GridFormatError(path, line_number, "non-numeric value")

    res_arcsec = round(cellsize * ARCSEC_PER_DEGREE, 9)
    origin_lat = round(header["yllcorner"] + nrows * cellsize, 10)
    grid = GeoGrid(origin_lat, header["xllcorner"], res_arcsec, nrows, ncols)
    nodata = header["nodata_value"]
    if integer:
        nodata = int(nodata)
    return Raster(grid, values, nodata)


def _format_scalar(value, integer):
    if isinstance(value, float) and math.isnan(value):
        return "nan"
    if integer:
        return str(int(value))
    return repr(float(value))


def read_points_csv(path) -> List[GeoPoint]:
    table = pd.read_csv(path)
    missing = {"lat", "lon"} - set(table.columns)
    if missing:
        raise ValueError(f"{path}: points CSV missing columns {sorted(missing)}")
    return [GeoPoint(float(lat), float(lon)) for lat, lon in zip(table["lat"], table["lon"])]


def write_points_csv(points: List[GeoPoint], path) -> None:
    PathUtils.ensure_parent(path)
    pd.DataFrame({"lat": [p.lat for p in points], "lon": [p.lon for p in points]}).to_csv(
        path, index=False, float_format="%.10f")
