"""图块模型的公共部分：参数管理、输入居中与交叉熵损失"""
from collections import OrderedDict
from typing import Dict, List, Tuple

import numpy as np

from .layers import he_normal

EPS = 1e-12


def bce_loss(scores: np.ndarray, labels: np.ndarray) -> float:
    s = np.clip(scores, EPS, 1.0 - EPS)
    return float(-np.mean(labels * np.log(s) + (1.0 - labels) * np.log(1.0 - s)))


class PatchModel:
    """带命名 float64 参数的图像级二分类模型

    子类实现 param_specs、forward_scores 与 loss_and_grads；
    参数按声明顺序保存。
    """
    kind = "base"

    def __init__(self):
        self.params: Dict[str, np.ndarray] = OrderedDict()
        self.trained = False

    def param_specs(self) -> List[Tuple[str, Tuple[int, ...]]]:
        raise NotImplementedError

    def config(self) -> dict:
        raise NotImplementedError

    def is_initialized(self) -> bool:
        return bool(self.params)

    def initialize(self, seed: int = 0, scale: float = 1.0) -> "PatchModel":
        rng = np.random.default_rng(seed)
        self.params = OrderedDict()
        for name, shape in self.param_specs():
            if name.endswith(".b"):
                self.params[name] = np.zeros(shape)
            else:
                self.params[name] = he_normal(rng, shape, scale)
        self.trained = False
        return self

    def zero_initialize(self) -> "PatchModel":
        self.params = OrderedDict((name, np.zeros(shape)) for name, shape in self.param_specs())
        self.trained = False
        return self

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def forward_scores(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def loss_and_grads(self, x: np.ndarray, y: np.ndarray):
        raise NotImplementedError

    def loss(self, x: np.ndarray, y: np.ndarray) -> float:
        return bce_loss(self.forward_scores(x), y)

    def predict(self, x: np.ndarray, batch_size: int = 32) -> np.ndarray:
        """按固定大小分块计算一批图块的得分"""
        x = np.asarray(x, dtype=np.float64)
        if len(x) == 0:
            return np.zeros(0)
        return np.concatenate([self.forward_scores(x[i:i + batch_size]) for i in range(0, len(x), batch_size)])

    def _check_input(self, x: np.ndarray, in_channels: int, multiple: int) -> np.ndarray:
        """整理为 (N, C, H, W) 并按图像中位数居中"""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x[None, None]
        elif x.ndim == 3:
            x = x[:, None]
        if x.ndim != 4 or x.shape[1] != in_channels:
            raise ValueError(f"expected input of shape (N, {in_channels}, H, W), got {x.shape}")
        if x.shape[2] % multiple or x.shape[3] % multiple:
            raise ValueError(f"spatial size {x.shape[2:]} must be divisible by {multiple}")
        return center_input(x)


def center_input(x: np.ndarray) -> np.ndarray:
    """每幅图像每个通道减去自身中位数，背景地面落在 0 附近"""
    if x.size == 0:
        return x
    return x - np.median(x, axis=(2, 3), keepdims=True)
