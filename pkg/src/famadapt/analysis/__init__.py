from .cost import (PRESETS, CostModel, count_parameters, flops_per_token, non_embedding_params,
                   relative_cost)
from .lmm import LmmFit, fit_arrays, fit_lmm, parse_formula, records_frame
from .records import AggregateRecord, RecordsFile, ResultRecord, aggregate, mean_sd
from .report import emit_report, marginalize

__all__ = [
    "PRESETS", "CostModel", "count_parameters", "flops_per_token", "non_embedding_params",
    "relative_cost", "LmmFit", "fit_arrays", "fit_lmm", "parse_formula", "records_frame",
    "AggregateRecord", "RecordsFile", "ResultRecord", "aggregate", "mean_sd",
    "emit_report", "marginalize",
]
