from src.pipeline.render import STYLES  # 渲染样式
from src.pipeline.workflow import PipelineWorkflow  # 各阶段工作流
from src.utils.config import PipelineConfig  # 配置
from src.utils.console import print_error, print_info
from src.utils.errors import (EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_VALIDATION, ConfigError, CorruptModelError,
                              GridFormatError)

import argparse
import sys
import traceback

STAGES = ("synth", "train", "detect", "allocate", "clusters", "validate")


def build_parser():
    parser = argparse.ArgumentParser(description='影像建筑检测与人口分布流水线')
    parser.add_argument('--config', type=str, default=None,
                        help='配置文件路径（KEY=value 格式）')
    parser.add_argument('--threads', type=int, default=None,
                        help='工作线程数，不影响结果')
    parser.add_argument('--seed', type=int, default=None,
                        help='随机种子')
    parser.add_argument('--traceback', action='store_true',
                        help='出错时打印完整堆栈')

    sub = parser.add_subparsers(dest='command', required=True)
    sub.add_parser('synth', help='生成合成世界与训练语料')
    sub.add_parser('train', help='训练 SegNet 与反馈模型')
    sub.add_parser('detect', help='建筑检测（方法 I/II 栅格）')
    sub.add_parser('allocate', help='人口分配与误差估计')
    sub.add_parser('clusters', help='城市聚类与距离分布')
    sub.add_parser('validate', help='精度验证')
    sub.add_parser('all', help='按顺序运行全部阶段')
    render = sub.add_parser('render', help='把栅格渲染为 PNG')
    render.add_argument('input', help='ASCII 栅格文件')
    render.add_argument('style', choices=STYLES, help='渲染样式')
    render.add_argument('output', nargs='?', default=None, help='输出 PNG 路径')
    render.add_argument('--scale', type=int, default=4, help='每个栅格放大的像素数')
    return parser


def exit_code_for(error):
    """异常类型 -> 退出码"""
    if isinstance(error, ConfigError):
        return EXIT_CONFIG
    if isinstance(error, (OSError, GridFormatError, CorruptModelError)):
        return EXIT_IO
    return EXIT_VALIDATION


def run(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = PipelineConfig.from_file(args.config, {'threads': args.threads, 'seed': args.seed})
        workflow = PipelineWorkflow(config)
        if args.command == 'render':
            workflow.run_render(args.input, args.style, args.output, args.scale)
        elif args.command == 'all':
            workflow.run_all()
        else:
            getattr(workflow, f'run_{args.command}')()
    except (ValueError, RuntimeError, OSError) as e:
        print_error(f"\n{args.command} 失败: {type(e).__name__}: {e}")
        if args.traceback:
            traceback.print_exc()
        return exit_code_for(e)
    print_info(f"\n{args.command} 完成")
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
