"""测试共用的小型栅格与临时目录"""
import shutil
import tempfile
import unittest

import numpy as np

from src.geo.grid import GeoGrid, Raster


def make_grid(rows, cols, res_arcsec=1.0, origin_lat=0.0, origin_lon=0.0):
    return GeoGrid(origin_lat, origin_lon, res_arcsec, rows, cols)


def make_raster(values, res_arcsec=1.0, origin_lat=0.0, origin_lon=0.0, nodata=None):
    values = np.asarray(values)
    return Raster(make_grid(values.shape[0], values.shape[1], res_arcsec, origin_lat, origin_lon), values, nodata)


class TempDirTestCase(unittest.TestCase):
    """每个测试一个临时目录"""

    def setUp(self):
        self.tmp = tempfile.mkdtemp(prefix="settle_test_")

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)
