import os
import unittest

import numpy as np
import pandas as pd

from src.geo.ascii_grid import write_grid_ascii
from src.geo.grid import Raster
from src.prefilter import (LineSegment, PatchSet, candidate_patches, data_reduction, detect_edges, extract_lines,
                           load_corpus, read_pgm, read_tile, save_corpus, smooth, to_grayscale, write_pgm,
                           write_tile)
from src.prefilter.imagery import ImageTile
from tests.helpers import TempDirTestCase, make_grid


def make_tile(pixels, origin_lat=0.0, origin_lon=0.0):
    pixels = np.asarray(pixels, dtype=float)
    grid = make_grid(pixels.shape[0], pixels.shape[1], res_arcsec=1 / 64.0, origin_lat=origin_lat,
                     origin_lon=origin_lon)
    return ImageTile(grid, pixels)


def rectangle_scene(size, rects, background=0.35, roof=0.9, noise=0.0, seed=0):
    """灰色背景上的亮矩形，rects 为 (r0, c0, h, w)"""
    rng = np.random.default_rng(seed)
    pixels = np.full((size, size), background) + rng.normal(0.0, noise, (size, size))
    for r0, c0, h, w in rects:
        pixels[r0:r0 + h, c0:c0 + w] = roof
    return make_tile(np.clip(pixels, 0.0, 1.0))


class TestImageTile(TempDirTestCase):

    def test_rejects_out_of_range_intensity(self):
        with self.assertRaises(ValueError):
            make_tile(np.full((8, 8), 1.5))

    def test_grayscale_average(self):
        bands = np.stack([np.zeros((2, 2)), np.ones((2, 2))])
        np.testing.assert_array_equal(to_grayscale(bands), np.full((2, 2), 0.5))

    def test_pgm_8_and_16_bit(self):
        pixels = np.linspace(0.0, 1.0, 64).reshape(8, 8)
        path8 = os.path.join(self.tmp, "a.pgm")
        path16 = os.path.join(self.tmp, "b.pgm")
        write_pgm(pixels, path8)
        write_pgm(pixels, path16, sixteen_bit=True)
        np.testing.assert_allclose(read_pgm(path8), pixels, atol=0.5 / 255 + 1e-12)
        np.testing.assert_allclose(read_pgm(path16), pixels, atol=0.5 / 65535 + 1e-12)

    def test_tile_with_sidecar(self):
        tile = make_tile(np.full((16, 16), 0.4), origin_lat=-13.0, origin_lon=34.0)
        path = os.path.join(self.tmp, "tile.pgm")
        write_tile(tile, path)
        back = read_tile(path)
        self.assertTrue(back.grid.same_as(tile.grid))
        np.testing.assert_allclose(back.pixels, 102 / 255.0)

    def test_tile_without_sidecar(self):
        path = os.path.join(self.tmp, "bare.pgm")
        write_pgm(np.zeros((8, 8)), path)
        with self.assertRaises(FileNotFoundError):
            read_tile(path)

    def test_tile_from_ascii_grid(self):
        path = os.path.join(self.tmp, "tile.asc")
        grid = make_grid(4, 4, res_arcsec=1 / 64.0)
        write_grid_ascii(Raster(grid, np.full((4, 4), 0.25)), path)
        np.testing.assert_array_equal(read_tile(path).pixels, np.full((4, 4), 0.25))


class TestSmooth(unittest.TestCase):

    def test_radius_zero_is_identity(self):
        tile = rectangle_scene(32, [(4, 4, 8, 8)], noise=0.05)
        np.testing.assert_array_equal(smooth(tile, 0).pixels, tile.pixels)

    def test_impulse_removed(self):
        pixels = np.zeros((9, 9))
        pixels[4, 4] = 1.0
        self.assertEqual(smooth(make_tile(pixels), 1).pixels.max(), 0.0)

    def test_negative_radius(self):
        with self.assertRaises(ValueError):
            smooth(make_tile(np.zeros((4, 4))), -1)

    def test_smoothing_reduces_false_edges(self):
        noisy = rectangle_scene(128, [(40, 40, 30, 30)], noise=0.1, seed=1)
        band = np.zeros((128, 128), dtype=bool)
        band[36:74, 36:74] = True
        band[44:66, 44:66] = False
        raw = detect_edges(noisy, 0.3, 0.6) & ~band
        cleaned = detect_edges(smooth(noisy, 2), 0.3, 0.6) & ~band
        self.assertGreater(raw.sum(), 0)
        self.assertLess(cleaned.sum(), raw.sum())


class TestEdges(unittest.TestCase):

    def test_constant_image_has_no_edges(self):
        self.assertFalse(detect_edges(make_tile(np.full((32, 32), 0.5)), 0.1, 0.3).any())

    def test_rectangle_edges_on_boundary(self):
        tile = rectangle_scene(64, [(20, 20, 20, 30)], background=0.0)
        edges = detect_edges(tile, 0.1, 0.3)
        self.assertTrue(edges.any())
        rows, cols = np.nonzero(edges)
        near_outer = (rows >= 18) & (rows <= 41) & (cols >= 18) & (cols <= 51)
        inside_inner = (rows >= 22) & (rows <= 37) & (cols >= 22) & (cols <= 47)
        self.assertTrue(np.all(near_outer & ~inside_inner))

    def test_equal_thresholds(self):
        tile = rectangle_scene(64, [(20, 20, 20, 20)], background=0.0)
        self.assertTrue(detect_edges(tile, 0.3, 0.3).any())

    def test_bad_thresholds(self):
        with self.assertRaises(ValueError):
            detect_edges(make_tile(np.zeros((8, 8))), 0.5, 0.1)


class TestLines(unittest.TestCase):

    def test_empty_edge_map(self):
        self.assertEqual(extract_lines(np.zeros((32, 32), dtype=bool), 5), [])

    def test_horizontal_run(self):
        edges = np.zeros((64, 64), dtype=bool)
        edges[30, 10:50] = True
        segments = extract_lines(edges, 20)
        self.assertGreaterEqual(len(segments), 1)
        for seg in segments:
            angle = seg.orientation_deg
            self.assertLessEqual(min(angle, 180.0 - angle), 2.0)
            self.assertGreaterEqual(seg.strength, 20)

    def test_noise_floor(self):
        for seed in range(100):
            noise = np.random.default_rng(seed).random((128, 128)) < 0.01
            self.assertEqual(extract_lines(noise, 20), [])

    def test_deterministic(self):
        tile = rectangle_scene(128, [(10, 10, 30, 20), (70, 60, 25, 40)], noise=0.02)
        edges = detect_edges(tile, 0.1, 0.3)
        self.assertEqual(extract_lines(edges, 8, seed=3), extract_lines(edges, 8, seed=3))

    def test_min_support_validated(self):
        with self.assertRaises(ValueError):
            extract_lines(np.zeros((4, 4), dtype=bool), 0)


class TestCandidatePatches(TempDirTestCase):

    def test_no_segments(self):
        patches = candidate_patches(make_tile(np.zeros((128, 128))), [])
        self.assertEqual(len(patches), 0)

    def test_single_midpoint(self):
        seg = LineSegment((70, 10), (70, 40), 31)
        patches = candidate_patches(make_tile(np.zeros((128, 128))), [seg])
        self.assertEqual(patches.windows.tolist(), [[1, 0]])

    def test_deduplicated_row_major(self):
        segs = [LineSegment((100, 100), (100, 120), 21), LineSegment((5, 70), (5, 90), 21),
                LineSegment((110, 110), (120, 110), 11)]
        patches = candidate_patches(make_tile(np.zeros((128, 128))), segs)
        self.assertEqual(patches.windows.tolist(), [[0, 1], [1, 1]])

    def test_tile_smaller_than_patch(self):
        with self.assertRaises(ValueError):
            candidate_patches(make_tile(np.zeros((32, 32))), [])

    def test_sparse_scene_recall_and_reduction(self):
        rects = [(100, 100, 20, 30), (300, 520, 24, 24), (610, 200, 18, 32), (800, 800, 30, 20), (900, 60, 16, 16)]
        tile = rectangle_scene(1024, rects, noise=0.02, seed=7)
        edges = detect_edges(smooth(tile, 1), 0.1, 0.3)
        patches = candidate_patches(tile, extract_lines(edges, 8))
        windows = {tuple(w) for w in patches.windows.tolist()}
        for r0, c0, h, w in rects:
            covered = {(r // 64, c // 64) for r in (r0, r0 + h - 1) for c in (c0, c0 + w - 1)}
            self.assertTrue(covered & windows, f"rectangle at {(r0, c0)} has no candidate")
        self.assertLessEqual(data_reduction(patches, tile), 0.35)

    def test_coverage_and_retention_over_many_scenes(self):
        rng = np.random.default_rng(8)
        found = total = retained = windows = 0
        for seed in range(100):
            cells = rng.choice(64, 10, replace=False)
            rects = []
            for cell in cells:
                h, w = rng.integers(12, 37, 2)
                r0 = (cell // 8) * 64 + rng.integers(2, 64 - 2 - h + 1)
                c0 = (cell % 8) * 64 + rng.integers(2, 64 - 2 - w + 1)
                rects.append((int(r0), int(c0), int(h), int(w)))
            tile = rectangle_scene(512, rects, roof=rng.uniform(0.75, 0.95), noise=0.02, seed=seed)
            patches = candidate_patches(tile, extract_lines(detect_edges(smooth(tile, 1), 0.1, 0.3), 8))
            kept = {tuple(w) for w in patches.windows.tolist()}
            found += sum((r0 // 64, c0 // 64) in kept for r0, c0, _, _ in rects)
            total += len(rects)
            retained += len(patches)
            windows += 64
        self.assertGreaterEqual(found / total, 0.99)
        self.assertLessEqual(retained / windows, 0.35)

    def test_corpus_round_trip(self):
        tile = rectangle_scene(128, [(10, 10, 20, 20)])
        patches = candidate_patches(tile, [LineSegment((10, 10), (10, 29), 20)])
        labeled = PatchSet(size=64, pixels=patches.pixels, anchors=patches.anchors, windows=patches.windows,
                           labels=np.array([1], dtype=np.int8))
        save_corpus(labeled, self.tmp)
        back = load_corpus(self.tmp)
        self.assertEqual(len(back), 1)
        self.assertTrue(back.is_labeled())
        self.assertEqual(int(back.labels[0]), 1)
        np.testing.assert_allclose(back.pixels[0], patches.pixels[0], atol=0.5 / 255 + 1e-12)
        self.assertAlmostEqual(back.anchors[0, 0], patches.anchors[0, 0], places=9)
        self.assertEqual(back.windows.tolist(), patches.windows.tolist())

    def test_manifest_without_window_columns(self):
        tile = rectangle_scene(128, [(70, 70, 20, 20)])
        patches = candidate_patches(tile, [LineSegment((70, 70), (70, 89), 20)])
        self.assertEqual(patches.windows.tolist(), [[1, 1]])
        manifest = save_corpus(patches, self.tmp)
        pd.read_csv(manifest).drop(columns=["win_row", "win_col"]).to_csv(manifest, index=False)
        back = load_corpus(self.tmp)
        self.assertEqual(back.windows.tolist(), [[0, 0]])
        self.assertFalse(back.is_labeled())


if __name__ == '__main__':
    unittest.main()
