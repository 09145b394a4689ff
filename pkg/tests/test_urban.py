from collections import deque
import os
import unittest

import numpy as np
import pandas as pd

from src.analysis import (distance_cdf, find_urban_clusters, km_density, percentile_from_cdf, write_cdf_csv,
                          write_cluster_table, write_percentiles_csv)
from src.analysis.urban import distance_bins
from src.geo.distance import haversine_km
from src.utils.errors import EmptyClusterError
from tests.helpers import TempDirTestCase, make_raster


def km_raster(values):
    """30 角秒网格（约 1 km）上的人口栅格"""
    return make_raster(np.asarray(values, dtype=float), res_arcsec=30.0)


def flood_fill_clusters(pop, density_min, pop_min, connectivity):
    """逐格广度优先搜索得到的聚类编号，作为对照"""
    values = pop.values
    dense = km_density(pop) >= density_min
    rows, cols = dense.shape
    steps = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    if connectivity == 8:
        steps += [(-1, -1), (-1, 1), (1, -1), (1, 1)]
    seen = np.zeros(dense.shape, dtype=bool)
    labels = np.zeros(dense.shape, dtype=int)
    next_id = 1
    for r in range(rows):
        for c in range(cols):
            if not dense[r, c] or seen[r, c]:
                continue
            seen[r, c] = True
            queue, cells = deque([(r, c)]), []
            while queue:
                i, j = queue.popleft()
                cells.append((i, j))
                for di, dj in steps:
                    a, b = i + di, j + dj
                    if 0 <= a < rows and 0 <= b < cols and dense[a, b] and not seen[a, b]:
                        seen[a, b] = True
                        queue.append((a, b))
            if sum(values[i, j] for i, j in cells) >= pop_min:
                for i, j in cells:
                    labels[i, j] = next_id
                next_id += 1
    return labels


def random_population(rng, shape=(10, 12)):
    pop = np.where(rng.random(shape) < 0.55, rng.uniform(0.0, 1500.0, shape), 0.0)
    return km_raster(pop)


def two_blocks():
    pop = np.zeros((12, 14))
    pop[1:4, 1:4] = 400.0
    pop[6:10, 7:11] = 400.0
    return km_raster(pop)


class TestUrbanClusters(unittest.TestCase):

    def test_small_block_rejected_by_population(self):
        clusters = find_urban_clusters(two_blocks(), km_factor=1)
        self.assertEqual(len(clusters.clusters), 1)
        cluster = clusters.clusters[0]
        self.assertEqual(cluster.cluster_id, 1)
        self.assertEqual(cluster.cells, 16)
        self.assertAlmostEqual(cluster.population, 6400.0)
        labels = clusters.labels.values
        self.assertTrue(np.all(labels[6:10, 7:11] == 1))
        self.assertFalse(labels[1:4, 1:4].any())

    def test_dense_cells_reach_threshold(self):
        density = km_density(two_blocks())
        self.assertTrue(np.all(density[6:10, 7:11] >= 300.0))
        self.assertTrue(np.all(density[0] == 0.0))

    def test_lower_pop_min_keeps_both(self):
        clusters = find_urban_clusters(two_blocks(), pop_min=3000.0, km_factor=1)
        self.assertEqual([c.cells for c in clusters.clusters], [9, 16])
        self.assertEqual(clusters.clustered_population, 3600.0 + 6400.0)

    def test_diagonal_connectivity(self):
        pop = np.zeros((4, 4))
        pop[0, 0] = pop[1, 1] = 3000.0
        four = find_urban_clusters(km_raster(pop), km_factor=1)
        eight = find_urban_clusters(km_raster(pop), connectivity=8, km_factor=1)
        self.assertTrue(four.is_empty())
        self.assertEqual(eight.clusters[0].population, 6000.0)

    def test_aggregates_fine_cells(self):
        # 1 角秒栅格聚合为 30 角秒：每个粗网格 900 个细栅格
        fine = np.zeros((60, 60))
        fine[:30, :30] = 8.0
        clusters = find_urban_clusters(make_raster(fine), pop_min=7000.0)
        self.assertEqual(clusters.km_grid.shape, (2, 2))
        self.assertEqual(clusters.labels.values.tolist(), [[1, 0], [0, 0]])
        self.assertAlmostEqual(clusters.clusters[0].population, 7200.0)

    def test_negative_population(self):
        with self.assertRaises(ValueError):
            find_urban_clusters(km_raster([[-1.0]]), km_factor=1)

    def test_matches_flood_fill(self):
        rng = np.random.default_rng(31)
        for trial in range(50):
            pop = random_population(rng)
            connectivity = 4 if trial % 2 else 8
            clusters = find_urban_clusters(pop, 300.0, 2000.0, connectivity, km_factor=1)
            expected = flood_fill_clusters(pop, 300.0, 2000.0, connectivity)
            np.testing.assert_array_equal(clusters.labels.values, expected, f"trial {trial}")
            self.assertEqual(len(clusters.clusters), int(expected.max()))
            for cluster in clusters.clusters:
                members = expected == cluster.cluster_id
                self.assertEqual(cluster.cells, int(members.sum()))
                self.assertAlmostEqual(cluster.population, float(pop.values[members].sum()), places=6)

    def test_stricter_thresholds_never_add_cells(self):
        rng = np.random.default_rng(32)
        for _ in range(20):
            pop = random_population(rng)
            previous = None
            for density_min in (0.0, 150.0, 300.0, 600.0, 1200.0):
                mask = find_urban_clusters(pop, density_min, 2000.0, km_factor=1).labels.values > 0
                if previous is not None:
                    self.assertFalse(np.any(mask & ~previous))
                previous = mask
            previous = None
            for pop_min in (0.0, 1000.0, 5000.0, 20000.0):
                mask = find_urban_clusters(pop, 300.0, pop_min, km_factor=1).labels.values > 0
                if previous is not None:
                    self.assertFalse(np.any(mask & ~previous))
                previous = mask

    def test_table(self):
        table = find_urban_clusters(two_blocks(), km_factor=1).table()
        self.assertEqual(list(table.columns), ["cluster_id", "population", "cells"])
        self.assertEqual(len(table), 1)


class TestDistanceCdf(TempDirTestCase):

    def test_two_mass_percentiles(self):
        # 95% 人口在 0 km，5% 在 10 km
        edges = np.arange(11, dtype=float)
        cum = np.array([0.95] * 10 + [1.0])
        self.assertEqual(percentile_from_cdf(edges, cum, 0.90), 0.0)
        self.assertEqual(percentile_from_cdf(edges, cum, 0.95), 10.0)
        self.assertEqual(percentile_from_cdf(edges, cum, 0.99), 10.0)
        self.assertTrue(np.isnan(percentile_from_cdf(np.array([]), np.array([]), 0.5)))

    def test_bins_round_up(self):
        self.assertEqual(distance_bins(np.array([0.0, 0.2, 1.0, 1.0000001, 2.5]), 1.0).tolist(), [0, 1, 1, 2, 3])

    def test_all_population_in_clusters(self):
        pop = np.zeros((6, 6))
        pop[2:4, 2:4] = 2000.0
        raster = km_raster(pop)
        cdf = distance_cdf(raster, find_urban_clusters(raster, km_factor=1))
        self.assertEqual(cdf.cum_fraction.tolist(), [1.0])
        self.assertEqual(cdf.percentiles[0.95], 0.0)

    def test_cdf_monotone_and_ends_at_one(self):
        rng = np.random.default_rng(4)
        pop = rng.random((20, 20)) * 50.0
        pop[5:9, 5:9] = 1000.0
        raster = km_raster(pop)
        cdf = distance_cdf(raster, find_urban_clusters(raster, km_factor=1), bin_km=0.7)
        self.assertTrue(np.all(np.diff(cdf.cum_fraction) >= 0))
        self.assertAlmostEqual(cdf.cum_fraction[-1], 1.0, places=12)
        self.assertAlmostEqual(cdf.weighted_mass, pop.sum(), places=6)
        self.assertLessEqual(cdf.percentiles[0.90], cdf.percentiles[0.95])
        self.assertLessEqual(cdf.percentiles[0.95], cdf.percentiles[0.99])

    def test_matches_brute_force(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            pop = (rng.random((15, 18)) < 0.5) * rng.random((15, 18)) * 30.0
            r0, c0 = rng.integers(0, 10, 2)
            pop[r0:r0 + 4, c0:c0 + 4] = 800.0
            raster = km_raster(pop)
            clusters = find_urban_clusters(raster, km_factor=1)
            grid = raster.grid
            lats, lons = np.meshgrid(grid.row_center_lats(), grid.col_center_lons(), indexing="ij")
            inside = clusters.labels.values > 0
            brute = np.zeros(pop.shape)
            for r, c in zip(*np.nonzero(~inside)):
                brute[r, c] = haversine_km(lats[r, c], lons[r, c], lats[inside], lons[inside]).min()
            for rural in (False, True):
                weights = np.where(inside, 0.0, pop) if rural else pop
                expected = np.bincount(distance_bins(brute, 0.7).ravel(), weights=weights.ravel())
                cdf = distance_cdf(raster, clusters, bin_km=0.7, rural_only=rural)
                n = max(len(expected), len(cdf.bin_population))
                np.testing.assert_allclose(np.pad(cdf.bin_population, (0, n - len(cdf.bin_population))),
                                           np.pad(expected, (0, n - len(expected))), atol=1e-9)

    def test_rural_only_excludes_clusters(self):
        pop = np.zeros((5, 5))
        pop[0, 0] = 6000.0
        pop[4, 4] = 10.0
        raster = km_raster(pop)
        cdf = distance_cdf(raster, find_urban_clusters(raster, km_factor=1), rural_only=True)
        self.assertEqual(cdf.total_population, 10.0)
        self.assertEqual(cdf.bin_population[0], 0.0)

    def test_no_clusters(self):
        raster = km_raster(np.ones((4, 4)))
        clusters = find_urban_clusters(raster, km_factor=1)
        self.assertTrue(clusters.is_empty())
        with self.assertRaises(EmptyClusterError):
            distance_cdf(raster, clusters)

    def test_bad_bin(self):
        raster = two_blocks()
        with self.assertRaises(ValueError):
            distance_cdf(raster, find_urban_clusters(raster, km_factor=1), bin_km=0.0)

    def test_csv_outputs(self):
        raster = two_blocks()
        clusters = find_urban_clusters(raster, km_factor=1)
        cdf = distance_cdf(raster, clusters)
        paths = [os.path.join(self.tmp, name) for name in ("cdf.csv", "p.csv", "clusters.csv")]
        write_cdf_csv(cdf, paths[0])
        write_percentiles_csv(cdf, paths[1])
        write_cluster_table(clusters, paths[2])
        self.assertEqual(list(pd.read_csv(paths[0]).columns), ["distance_km", "cum_population_fraction"])
        self.assertEqual(pd.read_csv(paths[1])["p"].tolist(), [0.90, 0.95, 0.99])
        self.assertEqual(pd.read_csv(paths[2])["cells"].tolist(), [16])


if __name__ == '__main__':
    unittest.main()
