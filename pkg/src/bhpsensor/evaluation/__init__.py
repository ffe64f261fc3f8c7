"""Metrics, scatter and time-series reports, result tables."""
from .metrics import METRICS, all_metrics, mape, nrmse, rmse, smape, within_band
from .reports import (EvalReport, TableRow, as_row, evaluate, format_cell, report_name, result_table, run_statistics,
                      scatter_report, timeseries_report)
