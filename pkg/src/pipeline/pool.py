"""线程池，结果按提交顺序合并"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Iterable, List, Optional


@dataclass
class TaskOutcome:
    item: Any
    value: Any = None
    error: Optional[BaseException] = None

    @property
    def ok(self) -> bool:
        return self.error is None


def ordered_map(func: Callable, items: Iterable, threads: int = 1) -> List:
    """用最多 threads 个线程计算 [func(x) for x in items]

    输出顺序与线程数无关。
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(func, items))


def guarded_map(func: Callable, items: Iterable, threads: int = 1) -> List[TaskOutcome]:
    """与 ordered_map 相同，但单项失败只记录，不中断整次运行"""
    def run(item):
        try:
            return TaskOutcome(item, func(item))
        except Exception as e:  # 单个任务失败不影响其他任务
            return TaskOutcome(item, error=e)
    return ordered_map(run, items, threads)
