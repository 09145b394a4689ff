"""领域异常定义

各阶段抛出的异常都集中在这里，`src/main.py` 根据异常类型映射退出码：
    2 - 校验失败
    3 - 读写失败
    4 - 配置错误
"""

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_CONFIG = 4


class ConfigError(ValueError):
    """配置文件或命令行参数不合法"""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"配置项 {key}: {message}")


class GridFormatError(ValueError):
    """ASCII 栅格文件格式错误，带行号"""

    def __init__(self, path, line_number, message):
        self.path = str(path)
        self.line_number = line_number
        super().__init__(f"{path}:{line_number}: {message}")


class GridMismatchError(ValueError):
    """两个栅格的网格不一致"""


class EmptyClusterError(ValueError):
    """不存在任何城市聚集区"""

    def __init__(self, message="no urban cluster exists"):
        super().__init__(message)


class HierarchyError(ValueError):
    """细级行政单元没有嵌套在粗级单元内"""

    def __init__(self, offending_cells, message=None):
        self.offending_cells = list(offending_cells)
        preview = ", ".join(f"({r},{c})" for r, c in self.offending_cells[:10])
        more = "" if len(self.offending_cells) <= 10 else f" ... (+{len(self.offending_cells) - 10})"
        super().__init__(message or f"非嵌套的行政单元层级, 问题栅格: {preview}{more}")


class CensusMismatchError(ValueError):
    """行政单元栅格引用了普查表中不存在的单元"""

    def __init__(self, missing_ids):
        self.missing_ids = sorted(int(i) for i in missing_ids)
        super().__init__(f"普查表缺少单元: {self.missing_ids}")


class CorruptModelError(ValueError):
    """模型权重文件损坏或不兼容"""

    def __init__(self, path, cause):
        self.path = str(path)
        self.cause = cause
        super().__init__(f"模型文件 {path} 无效: {cause}")


class TrainingDivergedError(RuntimeError):
    """训练过程中出现 NaN/Inf 损失"""

    def __init__(self, epoch, batch, loss):
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
        super().__init__(f"训练发散: epoch={epoch} batch={batch} loss={loss}")


class ConservationError(RuntimeError):
    """人口分配未守恒"""

    def __init__(self, max_relative_error):
        self.max_relative_error = max_relative_error
        super().__init__(f"人口分配不守恒, 最大相对误差 {max_relative_error:.3e}")
