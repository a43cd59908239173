# -*- coding: utf-8 -*-
"""
结果输出
Report writer

CSV：一行表头，每个结果行一行，浮点数保留 6 位有效数字；
JSON：ExperimentReport 的完整字典。
"""

import csv
import io
import os
from typing import Any, Iterable, Optional, Sequence

from ..models.experiment_model import ExperimentReport


def format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return "%.6g" % value
    return str(value)


def rows_to_csv_text(rows: Iterable[Any], columns: Optional[Sequence[str]] = None) -> str:
    rows = list(rows)
    if columns is None:
        if not rows:
            raise ValueError("没有结果行，也没有给出列名")
        columns = type(rows[0]).COLUMNS
    buf = io.StringIO(newline="")
    writer = csv.DictWriter(buf, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        data = row.to_dict() if hasattr(row, "to_dict") else dict(row)
        writer.writerow({name: format_value(data.get(name)) for name in columns})
    return buf.getvalue()


def _ensure_parent(path: str):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def write_csv(path: str, rows: Iterable[Any], columns: Optional[Sequence[str]] = None) -> str:
    text = rows_to_csv_text(rows, columns)
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(text)
    return path


def write_json(path: str, report: ExperimentReport) -> str:
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8") as f:
        f.write(report.to_json())
    return path


def read_json(path: str) -> ExperimentReport:
    if not os.path.exists(path):
        raise FileNotFoundError(f"报告文件不存在: {path}")
    report = ExperimentReport()
    with open(path, "r", encoding="utf-8") as f:
        report.from_json(f.read())
    return report
