import os
import platform


class PathUtils:
    """路径处理工具类"""

    @staticmethod
    def get_project_root():
        """获取项目根目录"""
        return os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

    @staticmethod
    def normalize_path(*paths):
        """标准化路径

        将路径转换为当前平台的格式，并处理相对路径

        参数:
            *paths: 路径片段

        返回:
            标准化后的路径
        """
        return os.path.normpath(os.path.join(*paths))

    @staticmethod
    def ensure_dir(path):
        """确保目录存在

        如果目录不存在则创建，并在类Unix系统上设置权限

        参数:
            path: 目录路径
        """
        if not path:
            return
        os.makedirs(path, exist_ok=True)
        if platform.system() != 'Windows':
            os.chmod(path, 0o755)

    @staticmethod
    def ensure_parent(file_path):
        """确保文件所在目录存在"""
        PathUtils.ensure_dir(os.path.dirname(os.path.abspath(file_path)))

    @staticmethod
    def get_log_dir(work_dir, component):
        """获取日志目录路径

        参数:
            work_dir: 输出根目录
            component: 组件名称（detect/allocate等）

        返回:
            日志目录的完整路径
        """
        log_dir = PathUtils.normalize_path(work_dir, "logs", component)
        PathUtils.ensure_dir(log_dir)
        return log_dir

    @staticmethod
    def stage_dir(work_dir, stage):
        """获取阶段输出目录（不存在则创建）"""
        out_dir = PathUtils.normalize_path(work_dir, stage)
        PathUtils.ensure_dir(out_dir)
        return out_dir
