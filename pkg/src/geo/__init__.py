# 栅格网格、栅格运算、球面距离与文件读写
from .grid import GeoGrid, GeoPoint, Raster, cell_area_km2, row_areas_km2, require_same_grid
from .raster_ops import aggregate, connected_components
from .distance import geodesic_distance_km, haversine_km, nearest_distance_km, distance_to_mask_km
from .ascii_grid import read_grid_ascii, write_grid_ascii, read_points_csv, write_points_csv
