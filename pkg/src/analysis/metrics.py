# -*- coding: utf-8 -*-
"""
重建与打分指标
Reconstruction and scoring metrics

单个种子上的余弦、逐坐标 MSE、内积绝对误差和 softmax 质量，
以及跨种子的均值/标准误聚合。
"""

from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import softmax

from ..models.experiment_model import MetricRow

_TINY = np.finfo(np.float64).tiny


def _as_rows(x, name: str) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if arr.size == 0:
        raise ValueError(f"{name} 不能为空")
    return arr


def per_key_errors(keys: np.ndarray, keys_hat: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """逐键 (cos(k, k̂), ‖k - k̂‖²/d)"""
    k = _as_rows(keys, "keys")
    kh = _as_rows(keys_hat, "keys_hat")
    if k.shape != kh.shape:
        raise ValueError(f"形状不一致: {k.shape} vs {kh.shape}")
    dots = np.einsum("nd,nd->n", k, kh)
    norms = np.linalg.norm(k, axis=1) * np.linalg.norm(kh, axis=1)
    cos = np.clip(dots / np.maximum(norms, _TINY), -1.0, 1.0)
    sq = np.sum((k - kh) ** 2, axis=1) / k.shape[1]
    return cos, sq


def ip_abs_error(queries: np.ndarray, keys: np.ndarray, scores: np.ndarray) -> float:
    """全部 (q, k) 对上 |qᵀk - score| 的均值"""
    exact = _as_rows(queries, "queries") @ _as_rows(keys, "keys").T
    return float(np.mean(np.abs(exact - np.asarray(scores, dtype=np.float64))))


def tail95(values) -> float:
    """最近秩 95 分位"""
    return float(np.percentile(np.asarray(values, dtype=np.float64), 95.0, method="inverted_cdf"))


def softmax_mass(scores, index: int, scale: float = 1.0) -> float:
    """缩放后 softmax 在 index 处的概率"""
    return float(softmax(np.asarray(scores, dtype=np.float64) * scale)[index])


def metric_suite(keys, queries, codec) -> MetricRow:
    """单个种子上一个编解码器的 cos / MSE / IP 误差"""
    keys = _as_rows(keys, "keys")
    queries = _as_rows(queries, "queries")
    state = codec.encode(keys)
    cos, sq = per_key_errors(keys, codec.decode(state))
    return MetricRow(
        codec=codec.key,
        bits=codec.bits,
        n_seeds=1,
        cosine=float(np.mean(cos)),
        mse=float(np.mean(sq)),
        ip_err=ip_abs_error(queries, keys, codec.score(queries, state)),
        bits_per_coord=codec.bits_per_coord(),
    )


def mean_and_stderr(values: Sequence[float]) -> Tuple[float, Optional[float]]:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("没有可聚合的数值")
    se = float(np.std(arr, ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else None
    return float(np.mean(arr)), se


def aggregate(rows: List[MetricRow]) -> MetricRow:
    """同一 (codec, bits) 单元的逐种子行 → 均值与标准误"""
    if not rows:
        raise ValueError("没有可聚合的结果行")
    first = rows[0]
    out = MetricRow(codec=first.codec, bits=first.bits, n_seeds=len(rows), bits_per_coord=first.bits_per_coord)
    for name in ("cosine", "mse", "ip_err", "softmax_mass"):
        values = [getattr(r, name) for r in rows if getattr(r, name) is not None]
        if values:
            mean, se = mean_and_stderr(values)
            setattr(out, name, mean)
            setattr(out, f"{name}_se", se)
    return out


def percent_change(value: float, reference: float) -> float:
    if reference == 0.0:
        return 0.0
    return 100.0 * (value / reference - 1.0)
