from dataclasses import dataclass, field, fields, asdict
import hashlib
import json
import os
from typing import Dict, Optional, Tuple
from dotenv import dotenv_values

from .errors import ConfigError

# 环境变量覆盖前缀，例如 SETTLE_THREADS=8
ENV_PREFIX = "SETTLE_"

# 不影响计算结果的配置项，不参与配置哈希
NON_RESULT_KEYS = ("threads", "work_dir")


def _range(lo=None, hi=None, *, lo_open=False, hi_open=False, choices=None):
    return {"lo": lo, "hi": hi, "lo_open": lo_open, "hi_open": hi_open, "choices": choices}


@dataclass
class PipelineConfig:
    """流水线配置类

    管理所有阶段的配置，包括：
    - 输入/输出路径
    - 预筛选阈值（边缘检测、霍夫变换）
    - 模型训练与级联阈值
    - 城市聚类阈值与距离分箱
    - 线程数与随机种子

    路径为空字符串时使用 world_dir / work_dir 下的默认文件名。
    """

    # 路径配置
    work_dir: str = "output"
    world_dir: str = ""
    worldspec: str = ""
    imagery_dir: str = ""
    census_coarse: str = ""
    admin_coarse: str = ""
    census_fine: str = ""
    admin_fine: str = ""
    nesting_map: str = ""
    corpus_dir: str = ""
    model_file: str = ""
    truth_raster: str = ""
    reference_b: str = ""
    reference_c: str = ""
    households: str = ""
    region_mask: str = ""
    population_method: str = field(default="uniform", metadata=_range(choices=("uniform", "fractional")))

    # 预筛选配置
    smooth_radius: int = field(default=1, metadata=_range(0))
    edge_low: float = field(default=0.1, metadata=_range(0.0))
    edge_high: float = field(default=0.3, metadata=_range(0.0))
    edge_sigma: float = field(default=1.0, metadata=_range(0.0, lo_open=True))
    min_support: int = field(default=8, metadata=_range(1))
    hough_threshold: int = field(default=5, metadata=_range(1))
    hough_line_gap: int = field(default=2, metadata=_range(0))
    patch_size: int = field(default=64, metadata=_range(8))
    segment_size: int = field(default=256, metadata=_range(8))

    # 模型配置
    segnet_channels: str = "8,16,32"
    feedback_channels: str = "8,16,16"
    learning_rate: float = field(default=0.05, metadata=_range(0.0))
    epochs: int = field(default=30, metadata=_range(1))
    batch_size: int = field(default=16, metadata=_range(1))
    init_scale: float = field(default=1.0, metadata=_range(0.0, lo_open=True))
    momentum: float = field(default=0.9, metadata=_range(0.0, 1.0, hi_open=True))
    inference_batch: int = field(default=32, metadata=_range(1))
    cascade_tau: float = field(default=0.5, metadata=_range(0.0, 1.0))
    footprint_threshold: float = field(default=0.5, metadata=_range(0.0, 1.0))
    feedback_passes: int = field(default=2, metadata=_range(0))
    corpus_size: int = field(default=200, metadata=_range(2))

    # 城市聚类配置
    density_min: float = field(default=300.0, metadata=_range(0.0))
    pop_min: float = field(default=5000.0, metadata=_range(0.0))
    connectivity: int = field(default=4, metadata=_range(choices=(4, 8)))
    bin_km: float = field(default=1.0, metadata=_range(0.0, lo_open=True))
    km_factor: int = field(default=30, metadata=_range(1))

    # 验证配置
    coincidence_radius_m: float = field(default=100.0, metadata=_range(0.0))
    region_factor: int = field(default=2, metadata=_range(1))
    top_disagreements: int = field(default=500, metadata=_range(1))

    # 运行配置
    threads: int = field(default=1, metadata=_range(1))
    seed: int = field(default=0, metadata=_range(0))

    def __post_init__(self):
        for f in fields(self):
            setattr(self, f.name, _coerce(f, getattr(self, f.name)))
        if self.edge_low > self.edge_high:
            raise ConfigError("edge_low", f"必须 <= edge_high ({self.edge_high})")
        self.segnet_channel_list()
        self.feedback_channel_list()

    @classmethod
    def from_file(cls, path: Optional[str] = None, overrides: Optional[Dict] = None) -> "PipelineConfig":
        """从键值配置文件加载配置

        参数:
            path: 配置文件路径（KEY=value 格式），为空时只使用默认值
            overrides: 命令行覆盖项（例如 threads、seed）

        返回:
            校验后的 PipelineConfig

        异常:
            ConfigError: 文件不存在、未知配置项或取值非法
        """
        values = {}
        if path:
            if not os.path.isfile(path):
                raise ConfigError("--config", f"文件不存在: {path}")
            values.update(read_key_values(path))
        known = {f.name for f in fields(cls)}
        for name in known:
            env_value = os.getenv(ENV_PREFIX + name.upper())
            if env_value is not None:
                values[name] = env_value
        for key, value in (overrides or {}).items():
            if value is not None:
                values[key] = value
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(unknown[0], "未知配置项")
        return cls(**values)

    def segnet_channel_list(self) -> Tuple[int, ...]:
        return _channel_list("segnet_channels", self.segnet_channels)

    def feedback_channel_list(self) -> Tuple[int, ...]:
        return _channel_list("feedback_channels", self.feedback_channels)

    def config_hash(self) -> str:
        """配置哈希（排除线程数等不影响结果的项）"""
        items = {k: v for k, v in sorted(asdict(self).items()) if k not in NON_RESULT_KEYS}
        return hashlib.sha256(json.dumps(items, sort_keys=True).encode("utf-8")).hexdigest()

    # 默认路径
    def path_for(self, key: str) -> str:
        value = getattr(self, key)
        if value:
            return value
        world = self.world_dir or os.path.join(self.work_dir, "world")
        defaults = {
            "world_dir": world,
            "imagery_dir": os.path.join(world, "imagery"),
            "census_coarse": os.path.join(world, "census_coarse.csv"),
            "admin_coarse": os.path.join(world, "admin_coarse.asc"),
            "census_fine": os.path.join(world, "census_fine.csv"),
            "admin_fine": os.path.join(world, "admin_fine.asc"),
            "nesting_map": os.path.join(world, "nesting.csv"),
            "corpus_dir": os.path.join(world, "corpus"),
            "truth_raster": os.path.join(world, "truth_built.asc"),
            "households": os.path.join(world, "households.csv"),
            "reference_b": os.path.join(world, "reference_b.asc"),
            "reference_c": os.path.join(world, "reference_c.asc"),
            "region_mask": os.path.join(world, "region_mask.asc"),
            "model_file": os.path.join(self.work_dir, "models", "model.smv"),
        }
        return defaults.get(key, "")

    def require(self, *keys: str) -> None:
        """确认阶段开始时引用的文件存在"""
        for key in keys:
            path = self.path_for(key)
            if not path or not os.path.exists(path):
                raise ConfigError(key, f"引用的文件不存在: {path or '(未设置)'}")


def read_key_values(path: str) -> Dict[str, str]:
    """读取扁平键值文件，键名统一为小写"""
    raw = dotenv_values(path)
    return {str(k).strip().lower(): ("" if v is None else str(v).strip()) for k, v in raw.items()}


def _channel_list(key, text):
    try:
        channels = tuple(int(part) for part in str(text).split(",") if part.strip())
    except ValueError:
        raise ConfigError(key, f"无法解析通道列表: {text}")
    if not channels or any(c < 1 for c in channels):
        raise ConfigError(key, f"通道数必须为正整数: {text}")
    return channels


def _coerce(f, value):
    kind = type(f.default)
    try:
        if kind is bool:
            value = str(value).lower() in ("1", "true", "yes")
        elif kind is int:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            value = int(str(value).strip()) if isinstance(value, str) else int(value)
        elif kind is float:
            value = float(value)
        else:
            value = "" if value is None else str(value)
    except (TypeError, ValueError):
        raise ConfigError(f.name, f"无法转换为 {kind.__name__}: {value!r}")

    bounds = f.metadata
    if not bounds:
        return value
    if bounds["choices"] is not None and value not in bounds["choices"]:
        raise ConfigError(f.name, f"取值必须属于 {bounds['choices']}, 实际为 {value!r}")
    lo, hi = bounds["lo"], bounds["hi"]
    if lo is not None and (value < lo or (bounds["lo_open"] and value == lo)):
        raise ConfigError(f.name, f"取值超出范围: {value}")
    if hi is not None and (value > hi or (bounds["hi_open"] and value == hi)):
        raise ConfigError(f.name, f"取值超出范围: {value}")
    return value
