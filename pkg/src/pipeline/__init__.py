# 流水线：各阶段工作流、并行执行、渲染、元数据
from .pool import TaskOutcome, guarded_map, ordered_map
from .sidecar import META_SUFFIX, meta_path, read_meta, write_meta, write_raster
from .render import STYLES, colorize, colormap_lut, render, style_values
from .workflow import DetectResult, PipelineWorkflow, TileDetection
