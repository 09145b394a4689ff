"""反馈门控的弱监督建筑轮廓分割

骨干是一个小型卷积分类器（conv + ReLU + maxpool 块，全局平均池化，线性
logit），只用图像级标签训练。部署时每个隐藏 ReLU 单元带一个二值门；
反馈过程只保留激活值乘以类别 logit 梯度为正的单元，输入分辨率的相关性图
取门控网络的 梯度 x 输入（居中后的输入）。
"""
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.special import expit

from .base import PatchModel, bce_loss
from .layers import (ACTIVATIONS, activate, activate_backward, conv2d_backward, conv2d_forward,
                     maxpool2x2_backward, maxpool2x2_forward)

DEFAULT_PASSES = 2


class FeedbackModel(PatchModel):
    kind = "feedback"

    def __init__(self, channels: Sequence[int] = (8, 16, 16), in_channels: int = 1, activation: str = "relu"):
        super().__init__()
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.channels = tuple(int(c) for c in channels)
        self.in_channels = int(in_channels)
        self.activation = activation

    @property
    def depth(self) -> int:
        return len(self.channels)

    def config(self) -> dict:
        return {"channels": list(self.channels), "in_channels": self.in_channels, "activation": self.activation}

    def param_specs(self):
        specs = []
        prev = self.in_channels
        for i, c in enumerate(self.channels):
            specs += [(f"conv{i}.w", (c, prev, 3, 3)), (f"conv{i}.b", (c,))]
            prev = c
        specs += [("fc.w", (1, prev)), ("fc.b", (1,))]
        return specs

    def forward(self, x, gates: Optional[List[np.ndarray]] = None):
        """返回 (logits (N,), cache)；gates 逐层乘到激活图上"""
        x = self._check_input(x, self.in_channels, 2 ** self.depth)
        p = self.params
        h = x
        layers = []
        for i in range(self.depth):
            z, conv_cache = conv2d_forward(h, p[f"conv{i}.w"], p[f"conv{i}.b"])
            act = activate(z, self.activation)
            gated = act if gates is None else act * gates[i]
            h, idx = maxpool2x2_forward(gated)
            layers.append((conv_cache, z, act, gated, idx))
        pooled = h.mean(axis=(2, 3))
        logits = pooled @ p["fc.w"][0] + p["fc.b"][0]
        return logits, (x, layers, pooled, h.shape, gates)

    def backward(self, dlogits, cache):
        """返回 (grads, d_input, 每层门控激活的梯度)"""
        x, layers, pooled, pooled_shape, gates = cache
        p = self.params
        grads = {"fc.w": (dlogits @ pooled)[None, :], "fc.b": np.array([dlogits.sum()])}
        dpooled = dlogits[:, None] * p["fc.w"][0][None, :]
        dh = np.broadcast_to(dpooled[:, :, None, None] / (pooled_shape[2] * pooled_shape[3]), pooled_shape)
        dgated = [None] * self.depth
        for i in reversed(range(self.depth)):
            conv_cache, z, act, gated, idx = layers[i]
            dg = maxpool2x2_backward(np.ascontiguousarray(dh), idx)
            dgated[i] = dg
            dact = dg if gates is None else dg * gates[i]
            dz = activate_backward(dact, z, act, self.activation)
            dh, grads[f"conv{i}.w"], grads[f"conv{i}.b"] = conv2d_backward(dz, conv_cache)
        return {name: grads[name] for name in p}, dh, dgated

    def forward_scores(self, x):
        return expit(self.forward(x)[0])

    def loss_and_grads(self, x, y):
        y = np.asarray(y, dtype=np.float64)
        logits, cache = self.forward(x)
        score = expit(logits)
        grads, _, _ = self.backward((score - y) / len(y), cache)
        return bce_loss(score, y), grads, score


@dataclass
class FootprintMap:
    relevance: np.ndarray
    metadata: dict = field(default_factory=dict)

    def binarize(self, threshold: float = 0.5) -> np.ndarray:
        return self.relevance >= threshold if self.relevance.max() > 0 else np.zeros(self.relevance.shape, bool)


def feedback_segment(model: FeedbackModel, image, passes: int = DEFAULT_PASSES) -> FootprintMap:
    """单幅图像在输入分辨率上的相关性图，取值 [0, 1]"""
    if passes < 0:
        raise ValueError(f"passes must be >= 0, got {passes}")
    x = np.asarray(image, dtype=np.float64)
    if x.ndim == 2:
        x = x[None, None]
    if x.shape[0] != 1:
        raise ValueError("feedback_segment takes a single image")
    ones = np.ones(1)
    gates = None
    for _ in range(passes):
        _, cache = model.forward(x, gates)
        _, _, dgated = model.backward(ones, cache)
        gates = [((layer[3] * dg) > 0).astype(np.float64) for layer, dg in zip(cache[1], dgated)]
    logits, cache = model.forward(x, gates)
    _, dx, _ = model.backward(ones, cache)
    relevance = np.maximum(dx[0, 0] * cache[0][0, 0], 0.0)
    peak = relevance.max()
    if peak > 0:
        relevance = relevance / peak
    active = None if gates is None else [float(g.mean()) for g in gates]
    return FootprintMap(relevance, {
        "passes": passes,
        "model_trained": bool(model.trained),
        "logit": float(logits[0]),
        "active_fraction": active,
    })
