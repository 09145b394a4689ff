# 城市聚类与距离分布
from .urban import (ClusterMap, DistanceCdf, UrbanCluster, distance_cdf, find_urban_clusters, km_density,
                    percentile_from_cdf, write_cdf_csv, write_cluster_table, write_percentiles_csv)
