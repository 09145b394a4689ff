# 人口分配：普查表、方法 I/II 分配、误差估计
from .census import (CensusTable, admin_ids, check_admin, read_census_csv, write_census_csv,
                     read_nesting_csv, write_nesting_csv)
from .allocate import AllocationResult, allocate, allocate_fractional, allocate_uniform
from .uncertainty import ErrorSummary, UncertaintyReport, estimate_uncertainty, validate_nesting
