# 预筛选：平滑、边缘检测、直线提取、候选图块
from .imagery import ImageTile, smooth, read_pgm, write_pgm, read_tile, write_tile, to_grayscale
from .edges import LineSegment, detect_edges, extract_lines
from .patches import (Patch, PatchSet, PATCH_SIZE, SEGMENT_SIZE, candidate_patches, data_reduction,
                      extract_window, save_corpus, load_corpus)
