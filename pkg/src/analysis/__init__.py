"""Metrics, experiment drivers and result writers."""

from .experiments import run_bitsplit_sweep, run_needle, run_rounding_ablation, run_table1
from .metrics import aggregate, metric_suite, per_key_errors, softmax_mass, tail95
from .report_writer import read_json, rows_to_csv_text, write_csv, write_json

__all__ = [
    "run_bitsplit_sweep",
    "run_needle",
    "run_rounding_ablation",
    "run_table1",
    "aggregate",
    "metric_suite",
    "per_key_errors",
    "softmax_mass",
    "tail95",
    "read_json",
    "rows_to_csv_text",
    "write_csv",
    "write_json",
]
