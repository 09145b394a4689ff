"""编码器-解码器图块分类器（SegNet 结构）

编码块为 conv(3x3) + 激活 + maxpool(2x2)，并记录池化位置；解码块与之对称：
按记录位置 unpool + conv(3x3) + 激活。输出层是 1x1 卷积加上瓶颈层
全局最大值经 ctx.w 加权后广播到每个像素的上下文项，逐像素 sigmoid 得到
概率图，图块得分为概率图的空间均值。
"""
from typing import Sequence, Tuple

import numpy as np
from scipy.special import expit

from .base import EPS, PatchModel, bce_loss
from .layers import (ACTIVATIONS, activate, activate_backward, conv2d_backward, conv2d_forward,
                     gather2x2, maxpool2x2_backward, maxpool2x2_forward, unpool2x2)

DEFAULT_PATCH_SIZE = 64


class SegNetModel(PatchModel):
    kind = "segnet"

    def __init__(self, channels: Sequence[int] = (8, 16, 32), in_channels: int = 1, activation: str = "relu",
                 patch_size: int = DEFAULT_PATCH_SIZE):
        super().__init__()
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        if not channels:
            raise ValueError("SegNet needs at least one encoder block")
        self.channels = tuple(int(c) for c in channels)
        self.in_channels = int(in_channels)
        self.activation = activation
        self.patch_size = int(patch_size)
        if self.patch_size < 1 or self.patch_size % (2 ** self.depth):
            raise ValueError(f"patch_size {self.patch_size} must be a positive multiple of {2 ** self.depth}")

    @property
    def depth(self) -> int:
        return len(self.channels)

    def config(self) -> dict:
        return {"channels": list(self.channels), "in_channels": self.in_channels, "activation": self.activation,
                "patch_size": self.patch_size}

    def decoder_channels(self):
        """每个解码卷积的 (输入, 输出) 通道数，从最深层开始"""
        pairs = []
        prev = self.channels[-1]
        for level in reversed(range(self.depth)):
            out = self.channels[level - 1] if level >= 1 else self.channels[0]
            pairs.append((prev, out))
            prev = out
        return pairs

    def param_specs(self):
        specs = []
        prev = self.in_channels
        for i, c in enumerate(self.channels):
            specs += [(f"enc{i}.w", (c, prev, 3, 3)), (f"enc{i}.b", (c,))]
            prev = c
        for i, (c_in, c_out) in enumerate(self.decoder_channels()):
            specs += [(f"dec{i}.w", (c_out, c_in, 3, 3)), (f"dec{i}.b", (c_out,))]
            prev = c_out
        specs += [("head.w", (1, prev, 1, 1)), ("head.b", (1,)), ("ctx.w", (1, self.channels[-1], 1, 1))]
        return specs

    def forward(self, x):
        """返回 (概率图 (N,H,W), 得分 (N,), cache)"""
        x = self._check_input(x, self.in_channels, 2 ** self.depth)
        p = self.params
        h = x
        enc = []
        for i in range(self.depth):
            z, conv_cache = conv2d_forward(h, p[f"enc{i}.w"], p[f"enc{i}.b"])
            a = activate(z, self.activation)
            h, idx = maxpool2x2_forward(a)
            enc.append((conv_cache, z, a, idx))

        n, cb, hb, wb = h.shape
        flat = h.reshape(n, cb, hb * wb)
        ctx_idx = flat.argmax(axis=2)
        context = np.take_along_axis(flat, ctx_idx[..., None], axis=2)[..., 0]
        ctx_term = context @ p["ctx.w"][0, :, 0, 0]

        dec = []
        for i in range(self.depth):
            level = self.depth - 1 - i
            u = unpool2x2(h, enc[level][3])
            z, conv_cache = conv2d_forward(u, p[f"dec{i}.w"], p[f"dec{i}.b"])
            h = activate(z, self.activation)
            dec.append((conv_cache, z, h, level))
        logits, head_cache = conv2d_forward(h, p["head.w"], p["head.b"])
        prob = expit(logits[:, 0] + ctx_term[:, None, None])
        score = prob.mean(axis=(1, 2))
        return prob, score, (enc, dec, head_cache, prob, (context, ctx_idx, (n, cb, hb, wb)))

    def backward(self, dscore, cache):
        """由 d(loss)/d(score) 反传，返回 (grads, d_input)"""
        enc, dec, head_cache, prob, (context, ctx_idx, bottleneck_shape) = cache
        p = self.params
        grads = {}
        n, height, width = prob.shape
        dprob = np.broadcast_to(dscore[:, None, None] / (height * width), prob.shape)
        dlogits = (dprob * prob * (1.0 - prob))[:, None]
        dctx = dlogits.sum(axis=(1, 2, 3))
        grads["ctx.w"] = (dctx @ context)[None, :, None, None]
        dh, grads["head.w"], grads["head.b"] = conv2d_backward(dlogits, head_cache)
        for i in reversed(range(self.depth)):
            conv_cache, z, a, level = dec[i]
            dz = activate_backward(dh, z, a, self.activation)
            du, grads[f"dec{i}.w"], grads[f"dec{i}.b"] = conv2d_backward(dz, conv_cache)
            dh = gather2x2(du, enc[level][3])

        # 全局最大值的梯度只回到最大值所在位置
        nb, cb, hb, wb = bottleneck_shape
        dcontext = dctx[:, None] * p["ctx.w"][0, :, 0, 0][None, :]
        dflat = np.zeros((nb, cb, hb * wb))
        np.put_along_axis(dflat, ctx_idx[..., None], dcontext[..., None], axis=2)
        dh = dh + dflat.reshape(bottleneck_shape)

        for i in reversed(range(self.depth)):
            conv_cache, z, a, idx = enc[i]
            da = maxpool2x2_backward(dh, idx)
            dz = activate_backward(da, z, a, self.activation)
            dh, grads[f"enc{i}.w"], grads[f"enc{i}.b"] = conv2d_backward(dz, conv_cache)
        return {name: grads[name] for name in p}, dh

    def forward_scores(self, x):
        return self.forward(x)[1]

    def loss_and_grads(self, x, y):
        y = np.asarray(y, dtype=np.float64)
        _, score, cache = self.forward(x)
        s = np.clip(score, EPS, 1.0 - EPS)
        dscore = (s - y) / (s * (1.0 - s)) / len(y)
        grads, _ = self.backward(dscore, cache)
        return bce_loss(score, y), grads, score


def segnet_forward(model: SegNetModel, patch) -> Tuple[np.ndarray, float]:
    """单个图块的概率图与得分

    图块必须是 patch_size x patch_size，像素值在 [0, 1] 内。
    """
    patch = np.asarray(patch, dtype=np.float64)
    if patch.ndim == 2:
        patch = patch[None, None]
    elif patch.ndim == 3:
        patch = patch[None]
    if patch.ndim != 4 or patch.shape[0] != 1:
        raise ValueError(f"segnet_forward takes a single patch, got shape {patch.shape}")
    size = model.patch_size
    if patch.shape[2:] != (size, size):
        raise ValueError(f"patch must be {size}x{size}, got {patch.shape[2]}x{patch.shape[3]}")
    if not np.all((patch >= 0.0) & (patch <= 1.0)):
        raise ValueError("patch intensities must lie in [0, 1]")
    prob, score, _ = model.forward(patch)
    return prob[0], float(score[0])
