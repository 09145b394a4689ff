# 精度评估：混淆计数、三方一致性、住户点重合、区域召回
from .metrics import (AgreementTable, CoincidenceResult, ConfusionCounts, DisagreementArea, RegionScore,
                      agreement_codes, code_label, confusion_counts, cross_compare, household_coincidence,
                      precision_recall, precision_recall_from_counts, region_recall)
from .report import ValidationReport
