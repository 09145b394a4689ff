"""带版本号的权重文件

布局（小端序）：
    b"SMV1"                      魔数
    uint32                       描述符字节数
    descriptor                   UTF-8 JSON：format_version，以及每个模型的
                                 kind、config、trained 标记和各层名称与形状
    float64 * N                  参数值，按描述符中模型与层的顺序排列，
                                 每个数组行优先
"""
import json
import struct
from collections import OrderedDict
from typing import Dict, List

import numpy as np

from ..utils.errors import CorruptModelError
from ..utils.path_utils import PathUtils
from .base import PatchModel
from .feedback import FeedbackModel
from .segnet import SegNetModel

MAGIC = b"SMV1"
FORMAT_VERSION = 1
MODEL_KINDS = {SegNetModel.kind: SegNetModel, FeedbackModel.kind: FeedbackModel}


def build_model(kind: str, config: dict) -> PatchModel:
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    return MODEL_KINDS[kind](**config)


def save_models(path, models: List[PatchModel]) -> None:
    """保存一个或多个模型到权重文件"""
    descriptor = {"format_version": FORMAT_VERSION, "models": []}
    chunks = []
    for model in models:
        if not model.is_initialized():
            raise ValueError(f"cannot save uninitialized {model.kind} model")
        layers = []
        for name, shape in model.param_specs():
            values = model.params[name]
            if values.shape != tuple(shape):
                raise ValueError(f"{model.kind}.{name}: shape {values.shape} != {tuple(shape)}")
            layers.append({"name": name, "shape": list(shape)})
            chunks.append(np.ascontiguousarray(values, dtype="<f8").tobytes())
        descriptor["models"].append({
            "kind": model.kind,
            "config": model.config(),
            "trained": bool(model.trained),
            "layers": layers,
        })
    header = json.dumps(descriptor, sort_keys=True).encode("utf-8")
    PathUtils.ensure_parent(path)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        for chunk in chunks:
            f.write(chunk)


def load_models(path) -> Dict[str, PatchModel]:
    """读取权重文件，返回 {kind: model}

    异常:
        CorruptModelError: 魔数、描述、形状或数据长度不匹配
        OSError: 文件无法读取
    """
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != MAGIC:
        raise CorruptModelError(path, f"bad magic {data[:4]!r}")
    if len(data) < 8:
        raise CorruptModelError(path, "truncated header")
    (length,) = struct.unpack("<I", data[4:8])
    if 8 + length > len(data):
        raise CorruptModelError(path, "descriptor length exceeds file size")
    try:
        descriptor = json.loads(data[8:8 + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptModelError(path, f"unreadable descriptor: {e}")
    if descriptor.get("format_version") != FORMAT_VERSION:
        raise CorruptModelError(path, f"unsupported format_version {descriptor.get('format_version')!r}")

    offset = 8 + length
    models = OrderedDict()
    for entry in descriptor.get("models", []):
        try:
            model = build_model(entry["kind"], entry["config"])
        except (KeyError, TypeError, ValueError) as e:
            raise CorruptModelError(path, f"bad model entry: {e}")
        specs = model.param_specs()
        declared = [(layer.get("name"), tuple(layer.get("shape", ()))) for layer in entry.get("layers", [])]
        if declared != [(name, tuple(shape)) for name, shape in specs]:
            raise CorruptModelError(path, f"{entry['kind']} layer list does not match its config")
        params = OrderedDict()
        for name, shape in specs:
            count = int(np.prod(shape))
            end = offset + 8 * count
            if end > len(data):
                raise CorruptModelError(path, f"truncated values at {entry['kind']}.{name}")
            params[name] = np.frombuffer(data, dtype="<f8", count=count, offset=offset).astype(np.float64).reshape(shape)
            offset = end
        model.params = params
        model.trained = bool(entry.get("trained", False))
        models[model.kind] = model
    if offset != len(data):
        raise CorruptModelError(path, f"{len(data) - offset} trailing bytes")
    if not models:
        raise CorruptModelError(path, "no models in bundle")
    return models
