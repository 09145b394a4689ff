"""流水线各阶段，阶段之间只通过 work_dir 下的文件交互"""
from dataclasses import dataclass, field
import json
import os
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from ..allocation import (allocate_fractional, allocate_uniform, estimate_uncertainty, read_census_csv,
                          read_nesting_csv)
from ..analysis import distance_cdf, find_urban_clusters, write_cdf_csv, write_cluster_table, write_percentiles_csv
from ..geo.ascii_grid import read_grid_ascii, read_points_csv
from ..geo.grid import GeoGrid, Raster, require_same_grid
from ..neuralnet import (FeedbackModel, SegNetModel, TrainConfig, cascade, feedback_segment, footprint_fraction,
                         load_models, save_models, train)
from ..prefilter import candidate_patches, detect_edges, extract_lines, load_corpus, read_tile, save_corpus, smooth
from ..prefilter.patches import window_counts
from ..synth import WorldSpec, generate
from ..utils.config import PipelineConfig
from ..utils.console import print_error, print_info, print_items, print_section, print_success, print_warning
from ..utils.errors import ConfigError, CorruptModelError, EmptyClusterError
from ..utils.path_utils import PathUtils
from ..utils.run_log import RunLog
from ..validation import (ValidationReport, cross_compare, household_coincidence, precision_recall,
                          region_recall)
from .pool import guarded_map
from .render import render
from .sidecar import write_meta, write_raster

FLOAT_NODATA = -9999.0
INT_NODATA = -9999


@dataclass
class TileDetection:
    row0: int
    col0: int
    scores: np.ndarray
    footprint: np.ndarray
    windows: int
    candidates: int
    segments: int


@dataclass
class DetectResult:
    built_binary: Raster
    built_fraction: Raster
    scores: Raster
    coverage: dict
    paths: Dict[str, str] = field(default_factory=dict)


class PipelineWorkflow:
    def __init__(self, config: PipelineConfig):
        """初始化流水线

        参数:
            config: 已校验的流水线配置
        """
        self.config = config
        self.work_dir = config.work_dir
        PathUtils.ensure_dir(self.work_dir)

    def stage_path(self, stage, name):
        return os.path.join(PathUtils.stage_dir(self.work_dir, stage), name)

    # ------------------------------------------------------------------
    # synth
    # ------------------------------------------------------------------
    def run_synth(self):
        """生成合成世界并写入 world_dir"""
        cfg = self.config
        print_section("生成合成世界")
        if cfg.worldspec:
            spec = WorldSpec.from_file(cfg.worldspec)
        else:
            spec = WorldSpec(seed=cfg.seed)
        world_dir = cfg.path_for("world_dir")
        print_items(worldspec=cfg.worldspec or "(默认)", seed=spec.seed, cells=f"{spec.rows}x{spec.cols}",
                    output=world_dir)
        log = RunLog(self.work_dir, "synth")

        world = generate(spec)
        paths = world.save(world_dir)
        for key in ("truth_built", "truth_fraction", "regions", "admin_coarse", "admin_fine",
                    "reference_b", "reference_c", "region_mask"):
            write_meta(paths[key], "synth", cfg, world_seed=spec.seed)

        corpus = world.sample_corpus(cfg.corpus_size, seed=cfg.seed)
        corpus_dir = cfg.path_for("corpus_dir")
        paths["corpus_manifest"] = save_corpus(corpus, corpus_dir)

        built = int(world.truth_built.values.sum())
        print_items(buildings=len(world.buildings), built_cells=built,
                    built_fraction=f"{built / world.truth_built.values.size:.4f}",
                    coarse_units=len(world.coarse_census), fine_units=len(world.fine_census),
                    households=len(world.households), corpus=len(corpus))
        log.log_step("synth", spec=json.dumps(spec.to_dict(), indent=2), outputs=json.dumps(paths, indent=2))
        print_success("- 合成世界已写出")
        return world, paths

    # ------------------------------------------------------------------
    # train
    # ------------------------------------------------------------------
    def run_train(self):
        """在图块语料上训练 SegNet 与反馈模型，写出权重文件"""
        cfg = self.config
        cfg.require("corpus_dir")
        print_section("训练模型")
        corpus = load_corpus(cfg.path_for("corpus_dir"), cfg.patch_size)
        print_items(corpus=cfg.path_for("corpus_dir"), patches=len(corpus),
                    positives=int((corpus.labels == 1).sum()), epochs=cfg.epochs, learning_rate=cfg.learning_rate)
        log = RunLog(self.work_dir, "train")
        train_cfg = TrainConfig(learning_rate=cfg.learning_rate, epochs=cfg.epochs, batch_size=cfg.batch_size,
                                seed=cfg.seed, init_scale=cfg.init_scale, momentum=cfg.momentum, verbose=True)

        models = [SegNetModel(cfg.segnet_channel_list(), patch_size=cfg.patch_size),
                  FeedbackModel(cfg.feedback_channel_list())]
        model_file = cfg.path_for("model_file")
        traces = {}
        for model in models:
            print_info(f"\n- 训练 {model.kind}")
            result = train(model, corpus, train_cfg)
            trace_path = os.path.join(os.path.dirname(model_file), f"{model.kind}_trace.csv")
            PathUtils.ensure_parent(trace_path)
            pd.DataFrame(result.trace_rows(), columns=["epoch", "loss", "accuracy"]).to_csv(
                trace_path, index=False, float_format="%.17g")
            traces[model.kind] = trace_path
            log.log_step(f"train {model.kind}", config=json.dumps(model.config()),
                         loss=result.loss_trace[-1], accuracy=result.accuracy_trace[-1],
                         warnings="\n".join(result.warnings) or "-")

        save_models(model_file, models)
        write_meta(model_file, "train", cfg, traces=traces)
        print_success(f"- 权重文件: {model_file}")
        return models, model_file

    # ------------------------------------------------------------------
    # detect
    # ------------------------------------------------------------------
    def _load_detection_models(self):
        path = self.config.path_for("model_file")
        self.config.require("model_file")
        models = load_models(path)
        for kind in (SegNetModel.kind, FeedbackModel.kind):
            if kind not in models:
                raise CorruptModelError(path, f"bundle has no {kind} model")
        for kind, model in models.items():
            if not model.trained:
                print_warning(f"- 模型 {kind} 未训练，结果仅供调试")
        segnet = models[SegNetModel.kind]
        if segnet.patch_size != self.config.patch_size:
            raise ConfigError("patch_size", f"模型按 {segnet.patch_size} 像素图块训练，与配置不符")
        return segnet, models[FeedbackModel.kind]

    def _read_index(self):
        imagery_dir = self.config.path_for("imagery_dir")
        with open(os.path.join(imagery_dir, "index.json"), "r", encoding="utf-8") as f:
            index = json.load(f)
        return imagery_dir, GeoGrid.from_dict(index["cell_grid"]), int(index["px_per_cell"]), index["tiles"]

    def _segment_origins(self, extent, size):
        if extent <= size:
            return [0]
        origins = list(range(0, extent - size + 1, size))
        if origins[-1] + size < extent:
            origins.append(extent - size)
        return origins

    def detect_tile(self, imagery_dir, entry, px_per_cell, segnet, feedback) -> TileDetection:
        """单个影像块：平滑 -> 边缘 -> 直线 -> 候选图块 -> 分类 -> 反馈分割"""
        cfg = self.config
        tile = read_tile(os.path.join(imagery_dir, entry["file"]))
        smoothed = smooth(tile, cfg.smooth_radius)
        edges = detect_edges(smoothed, cfg.edge_low, cfg.edge_high, cfg.edge_sigma)
        segments = extract_lines(edges, cfg.min_support, cfg.hough_threshold, cfg.hough_line_gap, seed=cfg.seed)
        patches = candidate_patches(tile, segments, cfg.patch_size)

        n_rows, n_cols = window_counts(tile, cfg.patch_size)
        scores = np.zeros((n_rows, n_cols))
        if len(patches):
            values = segnet.predict(patches.tensors(), cfg.inference_batch)
            scores[patches.windows[:, 0], patches.windows[:, 1]] = values

        footprint = np.zeros(tile.pixels.shape, dtype=bool)
        positive = scores >= cfg.cascade_tau
        seg_h = min(cfg.segment_size, tile.height)
        seg_w = min(cfg.segment_size, tile.width)
        for r0 in self._segment_origins(tile.height, seg_h):
            for c0 in self._segment_origins(tile.width, seg_w):
                cells = positive[r0 // px_per_cell:(r0 + seg_h) // px_per_cell,
                                 c0 // px_per_cell:(c0 + seg_w) // px_per_cell]
                if not cells.any():
                    continue
                fmap = feedback_segment(feedback, tile.pixels[r0:r0 + seg_h, c0:c0 + seg_w], cfg.feedback_passes)
                footprint[r0:r0 + seg_h, c0:c0 + seg_w] = fmap.binarize(cfg.footprint_threshold)
        fraction = footprint_fraction(footprint, px_per_cell)
        return TileDetection(int(entry["row0"]), int(entry["col0"]), scores, fraction,
                             n_rows * n_cols, len(patches), len(segments))

    def run_detect(self) -> DetectResult:
        """建筑检测，写出方法 I（二值）与方法 II（比例）栅格及覆盖报告"""
        cfg = self.config
        print_section("建筑检测")
        if cfg.patch_size <= 0 or cfg.segment_size % cfg.patch_size:
            raise ConfigError("segment_size", "必须是 patch_size 的整数倍")
        segnet, feedback = self._load_detection_models()
        imagery_dir, grid, px_per_cell, tiles = self._read_index()
        if px_per_cell != cfg.patch_size:
            raise ConfigError("patch_size", f"图块尺寸必须等于每个栅格的像素数 ({px_per_cell})")
        print_items(imagery=imagery_dir, tiles=len(tiles), cells=f"{grid.rows}x{grid.cols}", threads=cfg.threads)
        log = RunLog(self.work_dir, "detect")

        outcomes = guarded_map(lambda e: self.detect_tile(imagery_dir, e, px_per_cell, segnet, feedback),
                               tiles, cfg.threads)

        scores = np.zeros(grid.shape)
        footprint = np.zeros(grid.shape)
        analyzed = np.zeros(grid.shape, dtype=bool)
        failed = []
        windows = candidates = 0
        for outcome in outcomes:
            if not outcome.ok:
                print_error(f"- 影像块 {outcome.item['file']} 处理失败: {outcome.error}")
                failed.append({"file": outcome.item["file"], "error": f"{type(outcome.error).__name__}: {outcome.error}"})
                continue
            t = outcome.value
            rows, cols = t.scores.shape
            scores[t.row0:t.row0 + rows, t.col0:t.col0 + cols] = t.scores
            footprint[t.row0:t.row0 + rows, t.col0:t.col0 + cols] = t.footprint
            analyzed[t.row0:t.row0 + rows, t.col0:t.col0 + cols] = True
            windows += t.windows
            candidates += t.candidates

        complete = bool(analyzed.all())
        float_nodata = None if complete else FLOAT_NODATA
        score_r = Raster(grid, np.where(analyzed, scores, FLOAT_NODATA), float_nodata)
        foot_r = Raster(grid, np.where(analyzed, footprint, FLOAT_NODATA), float_nodata)
        fraction = cascade(score_r, foot_r, cfg.cascade_tau)
        fraction_values = np.where(analyzed, fraction.filled(0.0), FLOAT_NODATA)
        built_fraction = Raster(grid, fraction_values, float_nodata)
        binary = np.where(analyzed, (scores >= cfg.cascade_tau).astype(np.int64), INT_NODATA)
        built_binary = Raster(grid, binary, None if complete else INT_NODATA)

        n_analyzed = int(analyzed.sum())
        coverage = {
            "tiles": len(tiles),
            "tiles_failed": failed,
            "windows": windows,
            "candidates": candidates,
            "data_reduction": candidates / windows if windows else 0.0,
            "analyzed_fraction": n_analyzed / float(grid.rows * grid.cols),
            "built_cells": int(built_binary.as_bool().sum()),
            "built_fraction": int(built_binary.as_bool().sum()) / n_analyzed if n_analyzed else 0.0,
            "footprint_cells": int((built_fraction.filled(0.0) > 0).sum()),
        }

        paths = {}
        for name, raster in (("built_binary", built_binary), ("built_fraction", built_fraction), ("scores", score_r)):
            paths[name] = write_raster(raster, self.stage_path("detect", f"{name}.asc"), "detect", cfg)
        paths["coverage"] = self.stage_path("detect", "coverage.json")
        with open(paths["coverage"], "w", encoding="utf-8") as f:
            json.dump(coverage, f, indent=2, sort_keys=True)

        print_items(windows=windows, candidates=candidates, data_reduction=f"{coverage['data_reduction']:.3f}",
                    built_cells=coverage["built_cells"], failed_tiles=len(failed))
        log.log_step("detect", coverage=json.dumps(coverage, indent=2))
        print_success("- 检测完成")
        return DetectResult(built_binary, built_fraction, score_r, coverage, paths)

    # ------------------------------------------------------------------
    # allocate
    # ------------------------------------------------------------------
    def _urban_cell_mask(self, population: Raster) -> Optional[Raster]:
        """由本次分配的人口栅格求城市聚集区，展开回细网格；没有聚集区时返回 None"""
        cfg = self.config
        cmap = find_urban_clusters(population, cfg.density_min, cfg.pop_min, cfg.connectivity, cfg.km_factor)
        if cmap.is_empty():
            return None
        grid = population.grid
        k = cfg.km_factor
        fine = np.repeat(np.repeat(cmap.mask.as_bool(), k, axis=0), k, axis=1)[:grid.rows, :grid.cols]
        return Raster(grid, fine.astype(np.uint8))

    def run_allocate(self):
        """两种方法分配人口，检查守恒，并在有细级普查时估计误差"""
        cfg = self.config
        print_section("人口分配")
        cfg.require("census_coarse", "admin_coarse")
        built_path = self.stage_path("detect", "built_binary.asc")
        fraction_path = self.stage_path("detect", "built_fraction.asc")
        for path in (built_path, fraction_path):
            if not os.path.isfile(path):
                raise FileNotFoundError(f"缺少检测结果: {path}")
        census = read_census_csv(cfg.path_for("census_coarse"))
        admin = read_grid_ascii(cfg.path_for("admin_coarse"))
        built = read_grid_ascii(built_path)
        fraction = read_grid_ascii(fraction_path)
        require_same_grid(admin, built, fraction)
        log = RunLog(self.work_dir, "allocate")

        results = {"uniform": allocate_uniform(census, admin, built),
                   "fractional": allocate_fractional(census, admin, fraction)}
        conservation = {}
        paths = {}
        for method, result in results.items():
            paths[method] = write_raster(result.population, self.stage_path("allocate", f"population_{method}.asc"),
                                         "allocate", cfg, method=method)
            result.unallocated.to_csv(self.stage_path("allocate", f"unallocated_{method}.csv"), index=False)
            result.conservation_table().to_csv(self.stage_path("allocate", f"conservation_{method}.csv"),
                                               index=False, float_format="%.17g")
            conservation[method] = {"max_relative_error": result.max_relative_error(),
                                    "unallocated_units": int(len(result.unallocated)),
                                    "unallocated_population": float(result.unallocated["population"].sum())}
            print_items(**{f"{method}_max_relative_error": f"{conservation[method]['max_relative_error']:.3e}",
                           f"{method}_unallocated_units": conservation[method]["unallocated_units"]})

        report = None
        if os.path.isfile(cfg.path_for("census_fine")) and os.path.isfile(cfg.path_for("admin_fine")):
            nesting_path = cfg.path_for("nesting_map")
            nesting = read_nesting_csv(nesting_path) if os.path.isfile(nesting_path) else None
            weights = built if cfg.population_method == "uniform" else fraction
            report = estimate_uncertainty(census, admin, read_census_csv(cfg.path_for("census_fine")),
                                          read_grid_ascii(cfg.path_for("admin_fine")), weights,
                                          cfg.population_method, nesting,
                                          self._urban_cell_mask(results[cfg.population_method].population))
            report.units.to_csv(self.stage_path("allocate", "uncertainty_units.csv"), index=False,
                                float_format="%.17g")
            conservation["uncertainty"] = report.summary()
            print_items(error_factor=f"{report.error_factor:.3f}",
                        weighted_error_factor=f"{report.overall.weighted_error_factor:.3f}")
        else:
            print_warning("- 未提供细级普查，跳过误差估计")

        paths["report"] = self.stage_path("allocate", "conservation.json")
        with open(paths["report"], "w", encoding="utf-8") as f:
            json.dump(conservation, f, indent=2, sort_keys=True)
        log.log_step("allocate", report=json.dumps(conservation, indent=2))
        for result in results.values():
            result.check_conservation()
        print_success("- 分配完成，人口守恒")
        return results, report

    # ------------------------------------------------------------------
    # clusters
    # ------------------------------------------------------------------
    def run_clusters(self):
        """城市聚类与距离分布"""
        cfg = self.config
        print_section("城市聚类")
        pop_path = self.stage_path("allocate", f"population_{cfg.population_method}.asc")
        if not os.path.isfile(pop_path):
            raise FileNotFoundError(f"缺少人口栅格: {pop_path}")
        pop = read_grid_ascii(pop_path)
        log = RunLog(self.work_dir, "clusters")
        cmap = find_urban_clusters(pop, cfg.density_min, cfg.pop_min, cfg.connectivity, cfg.km_factor)
        paths = {"clusters": write_raster(cmap.labels, self.stage_path("clusters", "clusters.asc"), "clusters", cfg)}
        paths["table"] = self.stage_path("clusters", "cluster_table.csv")
        write_cluster_table(cmap, paths["table"])
        paths["map"] = render(cmap.labels, "clusters", self.stage_path("clusters", "clusters.png"), scale=8)
        print_items(clusters=len(cmap.clusters), clustered_population=f"{cmap.clustered_population:.1f}",
                    total_population=f"{float(pop.filled(0).sum()):.1f}")
        if cmap.is_empty():
            log.log_step("clusters", result="no urban cluster")
            raise EmptyClusterError()

        cdfs = {"all": distance_cdf(pop, cmap, cfg.bin_km), "rural": distance_cdf(pop, cmap, cfg.bin_km, True)}
        for label, cdf in cdfs.items():
            paths[f"cdf_{label}"] = self.stage_path("clusters", f"cdf_{label}.csv")
            write_cdf_csv(cdf, paths[f"cdf_{label}"])
            name = "percentiles.csv" if label == "all" else "percentiles_rural.csv"
            paths[f"percentiles_{label}"] = self.stage_path("clusters", name)
            write_percentiles_csv(cdf, paths[f"percentiles_{label}"])
            print_items(**{f"{label}_d{int(round(p * 100))}": f"{d:.1f} km" for p, d in cdf.percentiles.items()})
        log.log_step("clusters", table=cmap.table().to_string(index=False),
                     percentiles=json.dumps({k: v.percentiles for k, v in cdfs.items()}, indent=2))
        print_success("- 聚类完成")
        return cmap, cdfs

    # ------------------------------------------------------------------
    # validate
    # ------------------------------------------------------------------
    def run_validate(self) -> ValidationReport:
        """运行所有可用的验证分析，写出 CSV 与 JSON 摘要"""
        cfg = self.config
        print_section("精度验证")
        pred_path = self.stage_path("detect", "built_binary.asc")
        if not os.path.isfile(pred_path):
            raise FileNotFoundError(f"缺少检测结果: {pred_path}")
        pred = read_grid_ascii(pred_path)
        report = ValidationReport()
        log = RunLog(self.work_dir, "validate")

        def optional_raster(key):
            path = cfg.path_for(key)
            if path and os.path.isfile(path):
                return read_grid_ascii(path)
            report.notices.append(f"{key} 未提供 ({path or '未设置'})")
            return None

        def attempt(name, func):
            try:
                func()
            except (ValueError, OSError) as e:
                report.errors[name] = f"{type(e).__name__}: {e}"
                print_error(f"- {name} 失败: {e}")

        truth = optional_raster("truth_raster")
        if truth is not None:
            def score_truth():
                _, _, report.confusion = precision_recall(pred, truth)
                report.region_scores["factor_1"] = region_recall(pred, truth, 1)
                report.region_scores[f"factor_{cfg.region_factor}"] = region_recall(pred, truth, cfg.region_factor)
                region = optional_raster("region_mask")
                if region is not None:
                    report.region_scores[f"region_factor_{cfg.region_factor}"] = region_recall(
                        pred, truth, cfg.region_factor, region)
            attempt("precision_recall", score_truth)

        ref_b, ref_c = optional_raster("reference_b"), optional_raster("reference_c")
        if ref_b is not None and ref_c is not None:
            def compare():
                report.agreement, report.disagreements = cross_compare(pred, ref_b, ref_c, cfg.top_disagreements)
            attempt("cross_compare", compare)
        else:
            report.notices.append("cross_compare 跳过: 缺少第三个数据集")
            print_warning("- cross_compare 跳过: 缺少参考数据集")

        hh_path = cfg.path_for("households")
        if hh_path and os.path.isfile(hh_path):
            def coincide():
                report.coincidence = household_coincidence(read_points_csv(hh_path), pred, cfg.coincidence_radius_m)
            attempt("household_coincidence", coincide)
        else:
            report.notices.append(f"households 未提供 ({hh_path or '未设置'})")

        paths = report.write(PathUtils.stage_dir(self.work_dir, "validate"))
        summary = report.summary()
        print_items(pr=summary["pr"], re=summary["re"], coincidence=summary["coincidence_fraction"],
                    region_recall=summary["region_recall"])
        log.log_step("validate", summary=json.dumps(summary, indent=2), outputs=json.dumps(paths, indent=2))
        print_success("- 验证完成")
        return report

    # ------------------------------------------------------------------
    # render
    # ------------------------------------------------------------------
    def run_render(self, raster_path: str, style: str, output: Optional[str] = None, scale: int = 4) -> str:
        print_section("渲染")
        raster = read_grid_ascii(raster_path)
        output = output or os.path.splitext(raster_path)[0] + ".png"
        path = render(raster, style, output, scale)
        print_items(raster=raster_path, style=style, image=path)
        return path

    def run_all(self) -> List[str]:
        """按顺序运行全部阶段"""
        self.run_synth()
        self.run_train()
        self.run_detect()
        self.run_allocate()
        self.run_clusters()
        self.run_validate()
        return ["synth", "train", "detect", "allocate", "clusters", "validate"]
