import os
import unittest
from unittest.mock import patch

from src.pipeline import guarded_map, meta_path, ordered_map, read_meta, write_meta
from src.utils.config import PipelineConfig, read_key_values
from src.utils.errors import ConfigError
from tests.helpers import TempDirTestCase


class TestPipelineConfig(TempDirTestCase):

    def write_config(self, text):
        path = os.path.join(self.tmp, "pipeline.env")
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
        return path

    def test_defaults(self):
        config = PipelineConfig()
        self.assertEqual(config.patch_size, 64)
        self.assertEqual(config.segment_size, 256)
        self.assertEqual(config.density_min, 300.0)
        self.assertEqual(config.pop_min, 5000.0)
        self.assertEqual(config.segnet_channel_list(), (8, 16, 32))

    def test_file_values_coerced(self):
        path = self.write_config("EPOCHS=7\nCASCADE_TAU=0.4\n# 注释\nPOPULATION_METHOD=fractional\n")
        config = PipelineConfig.from_file(path)
        self.assertEqual(config.epochs, 7)
        self.assertEqual(config.cascade_tau, 0.4)
        self.assertEqual(config.population_method, "fractional")

    def test_unknown_key(self):
        path = self.write_config("EPOCHS=7\nLEARNING_RAT=0.1\n")
        with self.assertRaises(ConfigError) as ctx:
            PipelineConfig.from_file(path)
        self.assertEqual(ctx.exception.key, "learning_rat")

    def test_out_of_range(self):
        for key, value in (("cascade_tau", 1.5), ("connectivity", 6), ("threads", 0), ("bin_km", 0.0),
                           ("momentum", 1.0), ("population_method", "smart")):
            with self.subTest(key=key):
                with self.assertRaises(ConfigError):
                    PipelineConfig(**{key: value})

    def test_unparseable(self):
        with self.assertRaises(ConfigError):
            PipelineConfig(epochs="many")
        with self.assertRaises(ConfigError):
            PipelineConfig(segnet_channels="8,x")
        with self.assertRaises(ConfigError):
            PipelineConfig(edge_low=0.5, edge_high=0.2)

    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            PipelineConfig.from_file(os.path.join(self.tmp, "absent.env"))

    def test_precedence(self):
        path = self.write_config("THREADS=2\nSEED=3\n")
        with patch.dict(os.environ, {"SETTLE_THREADS": "4", "SETTLE_SEED": "5"}):
            config = PipelineConfig.from_file(path, {"threads": 8, "seed": None})
        self.assertEqual(config.threads, 8)
        self.assertEqual(config.seed, 5)

    def test_hash_ignores_threads(self):
        base = PipelineConfig()
        self.assertEqual(base.config_hash(), PipelineConfig(threads=16, work_dir="elsewhere").config_hash())
        self.assertNotEqual(base.config_hash(), PipelineConfig(seed=1).config_hash())

    def test_default_paths(self):
        config = PipelineConfig(work_dir="out")
        self.assertEqual(config.path_for("census_coarse"), os.path.join("out", "world", "census_coarse.csv"))
        self.assertEqual(config.path_for("model_file"), os.path.join("out", "models", "model.smv"))
        self.assertEqual(PipelineConfig(world_dir="w").path_for("admin_fine"), os.path.join("w", "admin_fine.asc"))
        self.assertEqual(PipelineConfig(truth_raster="t.asc").path_for("truth_raster"), "t.asc")

    def test_require(self):
        config = PipelineConfig(work_dir=self.tmp)
        with self.assertRaises(ConfigError) as ctx:
            config.require("census_coarse")
        self.assertEqual(ctx.exception.key, "census_coarse")

    def test_read_key_values_lowercases(self):
        path = self.write_config("Edge_Low=0.2\nEMPTY=\n")
        self.assertEqual(read_key_values(path), {"edge_low": "0.2", "empty": ""})


class TestSidecar(TempDirTestCase):

    def test_meta_round_trip(self):
        target = os.path.join(self.tmp, "built.asc")
        written = write_meta(target, "detect", PipelineConfig(), tiles=4)
        self.assertEqual(written, meta_path(target))
        meta = read_meta(target)
        self.assertEqual(meta["stage"], "detect")
        self.assertEqual(meta["tiles"], 4)
        self.assertEqual(meta["config_hash"], PipelineConfig(threads=3).config_hash())
        self.assertEqual(meta["file"], "built.asc")


class TestPool(unittest.TestCase):

    def test_order_independent_of_threads(self):
        items = list(range(50))
        self.assertEqual(ordered_map(lambda x: x * x, items, 1), ordered_map(lambda x: x * x, items, 6))

    def test_failures_recorded(self):
        def half(x):
            if x % 2:
                raise ValueError(f"odd {x}")
            return x // 2

        outcomes = guarded_map(half, range(5), threads=3)
        self.assertEqual([o.ok for o in outcomes], [True, False, True, False, True])
        self.assertEqual([o.value for o in outcomes if o.ok], [0, 1, 2])
        self.assertIsInstance(outcomes[1].error, ValueError)
        self.assertEqual(outcomes[3].item, 3)


if __name__ == '__main__':
    unittest.main()
