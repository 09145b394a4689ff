"""(batch, channels, height, width) float64 数组上的前向/反向基本运算"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

ACTIVATIONS = ("relu", "tanh", "linear")


def conv2d_forward(x, w, b):
    """步长 1、same 填充的互相关，返回 (out, cache)"""
    k = w.shape[2]
    p = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
    cols = sliding_window_view(xp, (k, k), axis=(2, 3))
    out = np.tensordot(cols, w, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    out = out + b[None, :, None, None]
    return np.ascontiguousarray(out), (cols, x.shape, w)


def conv2d_backward(dout, cache):
    cols, x_shape, w = cache
    k = w.shape[2]
    p = k // 2
    dw = np.tensordot(dout, cols, axes=([0, 2, 3], [0, 2, 3]))
    db = dout.sum(axis=(0, 2, 3))
    n, c, h, wd = x_shape
    dxp = np.zeros((n, c, h + 2 * p, wd + 2 * p))
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + h, j:j + wd] += np.tensordot(dout, w[:, :, i, j], axes=([1], [0])).transpose(0, 3, 1, 2)
    dx = dxp[:, :, p:p + h, p:p + wd] if p else dxp
    return dx, dw, db


def _blocks(x):
    n, c, h, w = x.shape
    return x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)


def maxpool2x2_forward(x):
    """2x2 最大池化，返回 (池化结果, 每块内最大值的位置)"""
    if x.shape[2] % 2 or x.shape[3] % 2:
        raise ValueError(f"maxpool needs even spatial size, got {x.shape[2:]}")
    blocks = _blocks(x)
    idx = blocks.argmax(axis=-1)
    return np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0], idx


def unpool2x2(y, idx):
    """把每个值放回记录的最大值位置，其余为 0"""
    n, c, hh, ww = y.shape
    blocks = np.zeros((n, c, hh, ww, 4), dtype=y.dtype)
    np.put_along_axis(blocks, idx[..., None], y[..., None], axis=-1)
    return blocks.reshape(n, c, hh, ww, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, hh * 2, ww * 2)


def gather2x2(x, idx):
    """unpool2x2 的伴随：按记录位置读出每块的值"""
    return np.take_along_axis(_blocks(x), idx[..., None], axis=-1)[..., 0]


# 最大池化的反向传播把梯度送回记录的位置
maxpool2x2_backward = unpool2x2


def activate(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "linear":
        return z
    raise ValueError(f"unknown activation {kind!r}")


def activate_backward(dout, z, a, kind):
    if kind == "relu":
        return dout * (z > 0)
    if kind == "tanh":
        return dout * (1.0 - a * a)
    return dout


def he_normal(rng, shape, scale):
    fan_in = int(np.prod(shape[1:]))
    return rng.normal(0.0, scale * np.sqrt(2.0 / fan_in), size=shape)
