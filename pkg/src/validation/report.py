"""验证报告：每项分析一个 CSV 块，外加一份 JSON 摘要"""
from dataclasses import dataclass, field
import json
import os
from typing import Dict, List, Optional

import pandas as pd

from ..utils.path_utils import PathUtils
from .metrics import AgreementTable, CoincidenceResult, ConfusionCounts, DisagreementArea, RegionScore


@dataclass
class ValidationReport:
    """验证报告

    各项分析互相独立：某项失败时记录在 errors 中，其余照常输出；
    缺少输入而跳过的分析记录在 notices 中。
    """
    confusion: Optional[ConfusionCounts] = None
    agreement: Optional[AgreementTable] = None
    disagreements: List[DisagreementArea] = field(default_factory=list)
    coincidence: Optional[CoincidenceResult] = None
    region_scores: Dict[str, RegionScore] = field(default_factory=dict)
    errors: Dict[str, str] = field(default_factory=dict)
    notices: List[str] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "pr": None if self.confusion is None else self.confusion.precision,
            "re": None if self.confusion is None else self.confusion.recall,
            "agreement_histogram": None if self.agreement is None else self.agreement.histogram(),
            "coincidence_fraction": None if self.coincidence is None else self.coincidence.fraction,
            "region_recall": {name: s.recall for name, s in self.region_scores.items()} or None,
            "region_precision": {name: s.precision for name, s in self.region_scores.items()} or None,
            "errors": self.errors,
            "notices": self.notices,
        }

    def write(self, out_dir) -> Dict[str, str]:
        """写出所有 CSV 与 summary.json，返回 {名称: 路径}"""
        PathUtils.ensure_dir(out_dir)
        written = {}

        def emit(name, frame):
            path = os.path.join(out_dir, f"{name}.csv")
            frame.to_csv(path, index=False, float_format="%.17g")
            written[name] = path

        if self.confusion is not None:
            emit("precision_recall", pd.DataFrame([self.confusion.to_dict()]))
        if self.agreement is not None:
            emit("agreement", pd.DataFrame(self.agreement.rows()))
            emit("disagreements", pd.DataFrame(
                [d.to_dict() for d in self.disagreements],
                columns=["rank", "kind", "cells", "area_km2", "row_min", "col_min", "row_max", "col_max",
                         "lat", "lon"]))
        if self.coincidence is not None:
            emit("coincidence", pd.DataFrame({
                "point": range(len(self.coincidence.matched)),
                "distance_km": self.coincidence.distances_km,
                "matched": self.coincidence.matched.astype(int),
            }))
        if self.region_scores:
            emit("region_recall", pd.DataFrame([
                {"region": name, "factor": s.factor, "recall": s.recall, "precision": s.precision,
                 "cells": s.region_cells, **{k: getattr(s.counts, k) for k in ("tp", "fp", "fn", "tn")}}
                for name, s in self.region_scores.items()]))

        path = os.path.join(out_dir, "summary.json")
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.summary(), f, indent=2, sort_keys=True)
        written["summary"] = path
        return written
