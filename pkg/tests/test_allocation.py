import math
import os
import unittest

import numpy as np
import pandas as pd

from src.allocation import (CensusTable, allocate, allocate_fractional, allocate_uniform, check_admin,
                            estimate_uncertainty, read_census_csv, read_nesting_csv, validate_nesting,
                            write_census_csv, write_nesting_csv)
from src.allocation.uncertainty import log_ratio_spread
from src.synth import WorldSpec, generate
from src.utils.errors import CensusMismatchError, ConservationError, HierarchyError
from tests.helpers import TempDirTestCase, make_raster


def random_world(rng, rows=12, cols=15, units=3):
    """不规则形状的行政单元、随机定居栅格与普查人口"""
    admin = rng.integers(1, units + 1, (rows, cols))
    built = (rng.random((rows, cols)) < 0.4).astype(int)
    fractions = np.where(built == 1, rng.random((rows, cols)), 0.0)
    census = CensusTable.from_dict({u: float(rng.integers(0, 10000)) for u in range(1, units + 1)})
    return census, make_raster(admin), make_raster(built), make_raster(fractions)


class TestCensusTable(TempDirTestCase):

    def test_rejects_duplicates_and_negatives(self):
        with self.assertRaises(ValueError):
            CensusTable(pd.Series([1.0, 2.0], index=[5, 5]))
        with self.assertRaises(ValueError):
            CensusTable.from_dict({1: -3.0})

    def test_sorted_by_unit(self):
        census = CensusTable.from_dict({9: 1.0, 2: 5.0})
        self.assertEqual(census.unit_ids.tolist(), [2, 9])
        self.assertEqual(census.total, 6.0)
        self.assertIn(9, census)

    def test_csv_round_trip(self):
        census = CensusTable.from_dict({3: 1234.5, 1: 0.0})
        path = os.path.join(self.tmp, "census.csv")
        write_census_csv(census, path)
        with open(path, encoding="utf-8") as f:
            self.assertEqual(f.readline().strip(), "unit_id,population")
        pd.testing.assert_series_equal(read_census_csv(path).populations, census.populations)

    def test_missing_columns(self):
        path = os.path.join(self.tmp, "bad.csv")
        pd.DataFrame({"id": [1], "pop": [2]}).to_csv(path, index=False)
        with self.assertRaises(ValueError):
            read_census_csv(path)

    def test_admin_ids_must_exist(self):
        admin = make_raster([[1, 2], [7, -9999]], nodata=-9999)
        with self.assertRaises(CensusMismatchError) as ctx:
            check_admin(CensusTable.from_dict({1: 1.0, 2: 1.0}), admin)
        self.assertEqual(ctx.exception.missing_ids, [7])

    def test_nesting_csv(self):
        path = os.path.join(self.tmp, "nesting.csv")
        write_nesting_csv({101: 1, 102: 1, 201: 2}.items(), path)
        self.assertEqual(read_nesting_csv(path), {101: 1, 102: 1, 201: 2})


class TestAllocateUniform(unittest.TestCase):

    def test_equal_split(self):
        census = CensusTable.from_dict({1: 100.0})
        admin = make_raster(np.ones((3, 3), dtype=int))
        built = make_raster([[1, 0, 1], [0, 0, 0], [1, 0, 1]])
        out = allocate_uniform(census, admin, built).population.values
        np.testing.assert_array_equal(out, [[25, 0, 25], [0, 0, 0], [25, 0, 25]])

    def test_zero_population_unit(self):
        census = CensusTable.from_dict({1: 0.0})
        out = allocate_uniform(census, make_raster(np.ones((2, 2), dtype=int)), make_raster(np.ones((2, 2), dtype=int)))
        self.assertFalse(out.population.values.any())
        self.assertEqual(len(out.unallocated), 0)

    def test_unsettled_unit_reported(self):
        census = CensusTable.from_dict({1: 50.0, 2: 70.0})
        admin = make_raster([[1, 1], [2, 2]])
        built = make_raster([[1, 0], [0, 0]])
        result = allocate_uniform(census, admin, built)
        np.testing.assert_array_equal(result.population.values, [[50, 0], [0, 0]])
        self.assertEqual(result.unallocated.to_dict("records"),
                         [{"unit_id": 2, "population": 70.0, "settled_cells": 0}])
        self.assertEqual(result.check_conservation(), 0.0)

    def test_cells_outside_coverage_get_nothing(self):
        census = CensusTable.from_dict({1: 10.0})
        admin = make_raster([[1, -9999]], nodata=-9999)
        result = allocate_uniform(census, admin, make_raster([[1, 1]]))
        np.testing.assert_array_equal(result.population.values, [[10.0, 0.0]])

    def test_conservation_on_random_worlds(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            census, admin, built, fractions = random_world(rng)
            for result in (allocate_uniform(census, admin, built), allocate_fractional(census, admin, fractions)):
                self.assertLessEqual(result.check_conservation(), 1e-9)
                table = result.conservation_table()
                for row in table.itertuples(index=False):
                    self.assertLessEqual(abs(row.allocated - row.census), 1e-9 * max(row.census, 1.0))
                self.assertTrue(np.all(result.population.values >= 0))

    def test_rejects_non_binary(self):
        with self.assertRaises(ValueError):
            allocate_uniform(CensusTable.from_dict({1: 1.0}), make_raster([[1]]), make_raster([[0.5]]))

    def test_scale_equivariance(self):
        rng = np.random.default_rng(1)
        census, admin, built, _ = random_world(rng)
        base = allocate_uniform(census, admin, built).population.values
        scaled = allocate_uniform(census.scaled(4.0), admin, built).population.values
        np.testing.assert_array_equal(scaled, 4.0 * base)

    def test_zero_where_unbuilt(self):
        rng = np.random.default_rng(2)
        census, admin, built, fractions = random_world(rng)
        self.assertFalse(allocate_uniform(census, admin, built).population.values[built.values == 0].any())
        self.assertFalse(allocate_fractional(census, admin, fractions).population.values[fractions.values == 0].any())

    def test_broken_conservation_raises(self):
        result = allocate_uniform(CensusTable.from_dict({1: 10.0}), make_raster([[1]]), make_raster([[1]]))
        result.unit_totals[1] = 9.0
        with self.assertRaises(ConservationError):
            result.check_conservation()


class TestAllocateFractional(unittest.TestCase):

    def test_proportional_split(self):
        census = CensusTable.from_dict({1: 80.0})
        out = allocate_fractional(census, make_raster([[1, 1, 1]]), make_raster([[0.5, 0.25, 0.25]]))
        np.testing.assert_array_equal(out.population.values, [[40.0, 20.0, 20.0]])

    def test_constant_fractions_match_uniform(self):
        rng = np.random.default_rng(3)
        census, admin, built, _ = random_world(rng)
        constant = make_raster(built.values * 0.3)
        uniform = allocate(census, admin, built, "uniform").population.values
        fractional = allocate(census, admin, constant, "fractional").population.values
        np.testing.assert_allclose(fractional, uniform, rtol=0, atol=1e-12 * max(1.0, uniform.max()))

    def test_zero_fraction_sum_reported(self):
        census = CensusTable.from_dict({1: 30.0})
        result = allocate_fractional(census, make_raster([[1, 1]]), make_raster([[0.0, 0.0]]))
        self.assertEqual(result.unallocated["unit_id"].tolist(), [1])

    def test_out_of_range_fraction(self):
        with self.assertRaises(ValueError):
            allocate_fractional(CensusTable.from_dict({1: 1.0}), make_raster([[1]]), make_raster([[1.2]]))

    def test_unknown_method(self):
        with self.assertRaises(ValueError):
            allocate(CensusTable.from_dict({1: 1.0}), make_raster([[1]]), make_raster([[1]]), "smart")


class TestUncertainty(unittest.TestCase):

    def test_equal_settled_counts(self):
        # 细级 {100, 300}，各 2 个定居栅格：估计 {200, 200}
        coarse = CensusTable.from_dict({1: 400.0})
        fine = CensusTable.from_dict({101: 100.0, 102: 300.0})
        coarse_admin = make_raster(np.ones((2, 2), dtype=int))
        fine_admin = make_raster([[101, 102], [101, 102]])
        report = estimate_uncertainty(coarse, coarse_admin, fine, fine_admin, make_raster(np.ones((2, 2), dtype=int)))
        self.assertEqual(report.units["estimate"].tolist(), [200.0, 200.0])
        self.assertAlmostEqual(report.error_factor, math.sqrt(3.0), delta=1e-9)

    def test_factor_two(self):
        # 细级 {100, 200}，定居栅格 2:1：估计 {200, 100}，对数比 ±ln 2
        coarse = CensusTable.from_dict({1: 300.0})
        fine = CensusTable.from_dict({101: 100.0, 102: 200.0})
        coarse_admin = make_raster(np.ones((1, 3), dtype=int))
        fine_admin = make_raster([[101, 101, 102]])
        report = estimate_uncertainty(coarse, coarse_admin, fine, fine_admin, make_raster([[1, 1, 1]]))
        np.testing.assert_allclose(report.units["log_ratio"], [math.log(2.0), -math.log(2.0)], atol=1e-12)
        self.assertAlmostEqual(report.error_factor, 2.0, delta=1e-9)
        self.assertEqual(report.units["coarse_id"].tolist(), [1, 1])

    def test_identity_hierarchy(self):
        census = CensusTable.from_dict({1: 10.0, 2: 20.0})
        admin = make_raster([[1, 2], [1, 2]])
        report = estimate_uncertainty(census, admin, census, admin, make_raster([[1, 0], [1, 1]]), "uniform")
        np.testing.assert_allclose(report.units["ratio"], [1.0, 1.0])
        self.assertAlmostEqual(report.error_factor, 1.0, places=12)

    def test_zero_estimate_units_excluded(self):
        coarse = CensusTable.from_dict({1: 100.0})
        fine = CensusTable.from_dict({101: 60.0, 102: 40.0})
        report = estimate_uncertainty(coarse, make_raster([[1, 1]]), fine, make_raster([[101, 102]]),
                                      make_raster([[1, 0]]))
        self.assertEqual(report.zero_estimate_units, 1)
        self.assertEqual(report.overall.units, 1)
        self.assertTrue(np.isnan(report.units["ratio"].iloc[1]))

    def test_non_nested_hierarchy(self):
        coarse_admin = make_raster([[1, 2], [1, 2]])
        fine_admin = make_raster([[101, 101], [101, 102]])
        with self.assertRaises(HierarchyError) as ctx:
            validate_nesting(coarse_admin.values, fine_admin.values)
        self.assertEqual(ctx.exception.offending_cells, [(0, 1)])

    def test_nesting_map_disagrees(self):
        ids = np.array([[1, 1], [2, 2]])
        fine = np.array([[101, 101], [201, 201]])
        self.assertEqual(validate_nesting(ids, fine, {101: 1, 201: 2}), {101: 1, 201: 2})
        with self.assertRaises(HierarchyError):
            validate_nesting(ids, fine, {101: 2, 201: 2})

    def test_urban_split(self):
        coarse = CensusTable.from_dict({1: 300.0})
        fine = CensusTable.from_dict({101: 100.0, 102: 200.0})
        urban = make_raster([[1, 1, 0]])
        report = estimate_uncertainty(coarse, make_raster([[1, 1, 1]]), fine, make_raster([[101, 101, 102]]),
                                      make_raster([[1, 1, 1]]), urban_mask=urban)
        self.assertEqual(report.units["urban"].tolist(), [True, False])
        self.assertEqual(report.split["urban"].units, 1)
        self.assertEqual(report.split["rural"].units, 1)
        self.assertIn("urban", report.summary())

    def test_error_factor_on_synthetic_world(self):
        # 细级人口按建筑面积与对数正态扰动生成，误差因子应落在合理区间
        spec = WorldSpec(seed=4, rows=32, cols=32, densities="0.5,0.4", settlement_spread=50.0,
                         coarse_rows=4, coarse_cols=4, fine_per_coarse=4, people_per_px=0.5, jitter_sigma=0.3)
        world = generate(spec)
        report = estimate_uncertainty(world.coarse_census, world.coarse_admin, world.fine_census, world.fine_admin,
                                      world.truth_built, "uniform", world.nesting)
        self.assertGreaterEqual(report.overall.units, 40)
        self.assertGreaterEqual(report.error_factor, 1.1)
        self.assertLessEqual(report.error_factor, 2.5)
        totals = report.units.groupby("coarse_id")[["truth", "estimate"]].sum()
        np.testing.assert_allclose(totals["estimate"], totals["truth"], rtol=1e-9)

    def test_weighted_spread(self):
        self.assertEqual(log_ratio_spread([1.0, -1.0]), 1.0)
        self.assertAlmostEqual(log_ratio_spread([1.0, -1.0], [1.0, 3.0]), math.sqrt(0.75), places=12)
        self.assertTrue(math.isnan(log_ratio_spread([])))


if __name__ == '__main__':
    unittest.main()
