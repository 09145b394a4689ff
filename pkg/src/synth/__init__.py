# 合成世界：影像、真值、普查层级、住户样本
from .worldspec import WorldSpec
from .world import Building, SyntheticWorld, generate, region_bands, render_tile
