from datetime import datetime
import json
import os

from ..geo.ascii_grid import write_grid_ascii
from ..geo.grid import Raster

META_SUFFIX = ".meta.json"


def meta_path(path) -> str:
    return f"{path}{META_SUFFIX}"


def write_meta(path, stage, config, **extra) -> str:
    """写出元数据边车文件（阶段、配置哈希、时间戳）

    时间戳不参与配置哈希。
    """
    meta = {
        "stage": stage,
        "config_hash": config.config_hash(),
        "file": os.path.basename(str(path)),
        "created": datetime.now().isoformat(timespec="seconds"),
    }
    meta.update(extra)
    target = meta_path(path)
    with open(target, "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
    return target


def read_meta(path) -> dict:
    with open(meta_path(path), "r", encoding="utf-8") as f:
        return json.load(f)


def write_raster(raster: Raster, path, stage, config, **extra) -> str:
    """栅格与其元数据一起写出"""
    write_grid_ascii(raster, path)
    write_meta(path, stage, config, **extra)
    return str(path)
