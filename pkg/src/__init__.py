# 空文件，标记这是一个 Python 包
# 主要包含：
# - geo: 栅格网格与文件读写
# - prefilter: 影像预筛选
# - neuralnet: 图块分类与足迹分割
# - allocation: 人口分配与误差估计
# - analysis: 城市聚类
# - validation: 精度评估
# - synth: 合成世界
# - pipeline: 各阶段工作流
# - utils: 工具函数
