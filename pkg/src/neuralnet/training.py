"""小批量 SGD 训练与有限差分梯度检验"""
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from ..utils.console import print_info, print_warning
from ..utils.errors import TrainingDivergedError
from .base import PatchModel


@dataclass
class TrainConfig:
    """训练配置

    learning_rate 允许为 0（权重保持不变）；其余数值必须为正。
    seed 同时决定初始化与每轮的样本顺序。
    """
    learning_rate: float = 0.05
    epochs: int = 30
    batch_size: int = 16
    seed: int = 0
    init_scale: float = 1.0
    momentum: float = 0.9
    verbose: bool = False

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.init_scale <= 0:
            raise ValueError(f"init_scale must be positive, got {self.init_scale}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")


@dataclass
class TrainResult:
    model: PatchModel
    loss_trace: List[float] = field(default_factory=list)
    accuracy_trace: List[float] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    def trace_rows(self):
        return [{"epoch": i + 1, "loss": loss, "accuracy": acc}
                for i, (loss, acc) in enumerate(zip(self.loss_trace, self.accuracy_trace))]


def accuracy(model: PatchModel, x, y, batch_size: int = 32) -> float:
    y = np.asarray(y)
    if len(y) == 0:
        return float("nan")
    pred = model.predict(x, batch_size) >= 0.5
    return float(np.mean(pred == (y == 1)))


def _corpus_arrays(corpus):
    if hasattr(corpus, "tensors"):
        if not corpus.is_labeled():
            raise ValueError("training corpus contains unlabeled patches")
        return corpus.tensors(), corpus.labels.astype(np.float64)
    x, y = corpus
    return np.asarray(x, dtype=np.float64), np.asarray(y)


def train(model: PatchModel, corpus, cfg: TrainConfig) -> TrainResult:
    """在带标签语料（PatchSet 或 (x, y)）上原地训练模型

    未初始化的模型用 cfg.seed 初始化；打乱顺序使用同一种子派生的独立随机流。
    """
    x, y = _corpus_arrays(corpus)
    if len(y) == 0:
        raise ValueError("training corpus is empty")
    y = y.astype(np.float64)
    result = TrainResult(model)

    classes = np.unique(y)
    if len(classes) < 2:
        msg = f"训练语料只包含一个类别: {classes.tolist()}"
        print_warning(msg)
        result.warnings.append(msg)

    if not model.is_initialized():
        model.initialize(cfg.seed, cfg.init_scale)
    shuffle_rng = np.random.default_rng([cfg.seed, 1])
    velocity = {name: np.zeros_like(p) for name, p in model.params.items()}

    n = len(y)
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        total_loss = 0.0
        correct = 0
        for batch, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            loss, grads, scores = model.loss_and_grads(x[idx], y[idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch + 1, batch + 1, loss)
            total_loss += loss * len(idx)
            correct += int(np.sum((scores >= 0.5) == (y[idx] == 1)))
            if cfg.learning_rate == 0:
                continue
            for name, p in model.params.items():
                v = velocity[name]
                v *= cfg.momentum
                v -= cfg.learning_rate * grads[name]
                p += v
        result.loss_trace.append(total_loss / n)
        result.accuracy_trace.append(correct / n)
        if cfg.verbose:
            print_info(f"- epoch {epoch + 1}/{cfg.epochs}: loss={result.loss_trace[-1]:.6f} "
                       f"acc={result.accuracy_trace[-1]:.3f}")

    model.trained = True
    return result


@dataclass
class GradCheckResult:
    max_error: float
    per_param: Dict[str, float]
    tolerance: float = 1e-5

    @property
    def worst(self) -> str:
        return max(self.per_param, key=self.per_param.get) if self.per_param else ""

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance


def relative_error(analytic, numeric, floor: float = 1e-6):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def grad_check(model: PatchModel, x, y, eps: float = 1e-4, tolerance: float = 1e-5) -> GradCheckResult:
    """对每个参数，用中心差分检验交叉熵损失的反向传播梯度"""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if not model.is_initialized():
        raise ValueError("grad_check needs an initialized model")
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    _, grads, _ = model.loss_and_grads(x, y)

    per_param = {}
    for name, p in model.params.items():
        numeric = np.zeros_like(p)
        flat = p.reshape(-1)
        num_flat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            plus = model.loss(x, y)
            flat[i] = orig - eps
            minus = model.loss(x, y)
            flat[i] = orig
            num_flat[i] = (plus - minus) / (2.0 * eps)
        per_param[name] = float(relative_error(grads[name], numeric).max())
    return GradCheckResult(max(per_param.values()), per_param, tolerance)
