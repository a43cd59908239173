# -*- coding: utf-8 -*-
"""
Lloyd-Max 标量量化器训练
Lloyd-Max scalar quantizer training

两种训练器共用同一套迭代：
    边界 = 相邻质心中点 → 质心 = 单元条件均值
- 解析密度：复合 Gauss-Legendre 求积得到任意边界处的累积矩
- 经验样本：排序一次，前缀和 + searchsorted

停止条件：失真相对下降 < tol 或达到 max_iter；每次迭代检查失真不增。
空单元修复：在失真最大的单元的均值处将其一分为二。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..models.codebook_model import MAX_BITS, Codebook, CodebookKind
from .marginals import DensityKind, DensitySpec
from .quadrature import CompositeGaussLegendre, MomentTable

logger = logging.getLogger(__name__)

_KIND_FOR_DENSITY = {
    DensityKind.OCT_COORD: CodebookKind.OCT_COORD,
    DensityKind.TRIPLET_NORM: CodebookKind.TRIPLET_NORM,
    DensityKind.ROTATED_COORD: CodebookKind.ROTATED_COORD,
}

# 失真单调性检查的浮点容差（相对）
MONOTONE_SLACK = 1e-9


@dataclass(frozen=True)
class TrainingOptions:
    """Lloyd 迭代参数"""

    tol: float = 1e-10
    max_iter: int = 10000
    panels: int = 4096
    nodes: int = 8

    def __post_init__(self):
        if self.tol < 0 or self.max_iter < 1:
            raise ValueError(f"训练参数无效: tol={self.tol}, max_iter={self.max_iter}")


def _check_bits(bits: int):
    if not 1 <= int(bits) <= MAX_BITS:
        raise ValueError(f"码本位数必须在 [1, {MAX_BITS}] 内: {bits}")


class _Cells:
    """单元统计的来源：给定边界，返回每个单元的 (质量, 一阶矩, 二阶矩)"""

    def cumulative(self, bounds: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def total(self) -> np.ndarray:
        raise NotImplementedError

    def cell_stats(self, bounds: np.ndarray) -> np.ndarray:
        inner = self.cumulative(bounds)
        lo = np.zeros((3, 1))
        hi = self.total().reshape(3, 1)
        cum = np.concatenate([lo, inner, hi], axis=1)
        return np.diff(cum, axis=1)


class _DensityCells(_Cells):
    def __init__(self, table: MomentTable, mass: float):
        self.table = table
        self.mass = mass

    def cumulative(self, bounds):
        return self.table.at(bounds) / self.mass

    def total(self):
        return np.asarray(self.table.total) / self.mass


class _SampleCells(_Cells):
    def __init__(self, sorted_x: np.ndarray):
        self.x = sorted_x
        n = sorted_x.size
        self.prefix = np.stack([
            np.arange(n + 1, dtype=np.float64),
            np.concatenate([[0.0], np.cumsum(sorted_x)]),
            np.concatenate([[0.0], np.cumsum(sorted_x * sorted_x)]),
        ]) / n

    def cumulative(self, bounds):
        # 与 quantize_index 一致：等于边界的值归入上方单元
        idx = np.searchsorted(self.x, bounds, side="left")
        return self.prefix[:, idx]

    def total(self):
        return self.prefix[:, -1]


def _cell_distortion(stats: np.ndarray) -> np.ndarray:
    m0, m1, m2 = stats
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.where(m0 > 0.0, m2 - m1 * m1 / np.where(m0 > 0.0, m0, 1.0), 0.0)
    return np.maximum(d, 0.0)


def _split_worst_cell(cells: _Cells, centroids: np.ndarray, bounds: np.ndarray,
                      stats: np.ndarray, empty: np.ndarray) -> np.ndarray:
    """删除空单元的质心，把失真最大的单元在其均值处一分为二"""
    dist = np.where(empty, -1.0, _cell_distortion(stats))
    j = int(np.argmax(dist))
    m0, m1, _ = stats[:, j]
    mean = m1 / m0
    below = np.zeros(3) if j == 0 else cells.cumulative(bounds[j - 1:j])[:, 0]
    part_lo = cells.cumulative(np.array([mean]))[:, 0] - below
    part_hi = stats[:, j] - part_lo
    new = [p[1] / p[0] for p in (part_lo, part_hi) if p[0] > 0]
    if len(new) < 2:
        half = np.sqrt(max(dist[j] / m0, 1e-24)) / 2.0
        new = [mean - half, mean + half]
    drop = np.flatnonzero(empty | (np.arange(centroids.size) == j))
    out = np.sort(np.concatenate([np.delete(centroids, drop), new]))
    # 多个空单元时用相邻中点补齐
    while out.size < centroids.size:
        gap = int(np.argmax(np.diff(out)))
        out = np.sort(np.append(out, (out[gap] + out[gap + 1]) / 2.0))
    logger.warning("Lloyd 训练出现 %d 个空单元，已拆分失真最大的单元", int(empty.sum()))
    return out


def _lloyd(cells: _Cells, init: np.ndarray, opts: TrainingOptions, label: str) -> Tuple[np.ndarray, float, int]:
    c = np.array(init, dtype=np.float64)
    prev: Optional[float] = None
    dist = float("nan")
    it = 0
    for it in range(1, opts.max_iter + 1):
        bounds = (c[:-1] + c[1:]) / 2.0
        stats = cells.cell_stats(bounds)
        empty = stats[0] <= 0.0
        if np.any(empty):
            c = _split_worst_cell(cells, c, bounds, stats, empty)
            prev = None
            continue
        c_new = stats[1] / stats[0]
        dist = float(np.sum(_cell_distortion(stats)))
        if prev is not None and dist > prev * (1.0 + MONOTONE_SLACK) + 1e-300:
            raise RuntimeError(f"{label}: Lloyd 失真上升 {prev:.12g} -> {dist:.12g}")
        c = c_new
        if dist <= 0.0:
            break
        if prev is not None and (prev - dist) / prev < opts.tol:
            break
        prev = dist
    else:
        logger.warning("%s: 达到最大迭代次数 %d，失真 %.6g", label, opts.max_iter, dist)
    return c, dist, it


def _quantile_init(cdf_grid: np.ndarray, x_grid: np.ndarray, k: int) -> np.ndarray:
    levels = (np.arange(k) + 0.5) / k
    return np.interp(levels, cdf_grid, x_grid)


def train_from_density(density: DensitySpec, bits: int, opts: Optional[TrainingOptions] = None,
                       kind: Optional[CodebookKind] = None) -> Codebook:
    """在解析密度上训练 2^bits 级 Lloyd-Max 码本"""
    _check_bits(bits)
    opts = opts or TrainingOptions()
    rule = CompositeGaussLegendre(density.lo, density.hi, opts.panels, opts.nodes)
    table = rule.prefix_moments(density.pdf)
    mass = table.total[0]
    if not np.isfinite(mass) or mass <= 0.0:
        raise ValueError(f"密度无法归一化: 总质量 {mass}")
    if abs(mass - 1.0) > 1e-6:
        logger.warning("密度总质量为 %.9f，按其归一化", mass)
    k = 1 << int(bits)
    edges = rule.lo + rule.width * np.arange(rule.panels + 1)
    cdf = table.prefix[0] / mass
    init = _quantile_init(cdf, edges, k)
    label = f"{density.kind.value}(d={density.dim}, b={bits})"
    logger.info("训练码本 %s", label)
    c, dist, iters = _lloyd(_DensityCells(table, mass), init, opts, label)
    logger.info("码本 %s 完成: %d 次迭代, 失真 %.6g", label, iters, dist)
    return Codebook(kind or _KIND_FOR_DENSITY.get(density.kind, CodebookKind.CUSTOM), bits,
                    np.clip(c, density.lo, density.hi), density.lo, density.hi, density.dim, dist)


def train_from_samples(samples: np.ndarray, bits: int, opts: Optional[TrainingOptions] = None,
                       kind: CodebookKind = CodebookKind.CUSTOM, dim: int = 0,
                       domain: Optional[Tuple[float, float]] = None) -> Codebook:
    """在经验样本上训练码本；样本顺序与初始化确定时结果确定"""
    _check_bits(bits)
    opts = opts or TrainingOptions()
    x = np.sort(np.asarray(samples, dtype=np.float64).reshape(-1))
    if x.size == 0 or not np.all(np.isfinite(x)):
        raise ValueError("训练样本必须非空且有限")
    k = 1 << int(bits)
    distinct = np.unique(x)
    if distinct.size < k:
        raise ValueError(f"样本只有 {distinct.size} 个不同值，少于 {k} 个码字")
    idx = np.floor((np.arange(k) + 0.5) * x.size / k).astype(np.int64)
    init = x[idx]
    if np.unique(init).size < k:
        init = distinct[np.floor((np.arange(k) + 0.5) * distinct.size / k).astype(np.int64)]
    lo, hi = domain if domain is not None else (float(x[0]), float(x[-1]))
    label = f"samples(n={x.size}, b={bits})"
    logger.info("训练码本 %s", label)
    c, dist, iters = _lloyd(_SampleCells(x), init, opts, label)
    logger.info("码本 %s 完成: %d 次迭代, 失真 %.6g", label, iters, dist)
    return Codebook(kind, bits, np.clip(c, lo, hi), lo, hi, dim, dist)


def quantize_index(cb: Codebook, x):
    """最近质心索引：截断到定义域后，统计严格小于 x 的边界个数"""
    v = np.clip(np.asarray(x, dtype=np.float64), cb.lo, cb.hi)
    idx = np.searchsorted(cb.boundaries, v, side="right")
    return int(idx) if idx.ndim == 0 else idx.astype(np.int64)


def dequantize(cb: Codebook, index):
    i = np.asarray(index)
    if np.any(i < 0) or np.any(i >= cb.size):
        raise ValueError(f"码本索引越界: {index} (共 {cb.size} 个码字)")
    out = cb.centroids[i]
    return float(out) if out.ndim == 0 else out


def density_distortion(cb: Codebook, density: DensitySpec, opts: Optional[TrainingOptions] = None) -> float:
    """码本在给定密度下的均方失真"""
    opts = opts or TrainingOptions()
    rule = CompositeGaussLegendre(density.lo, density.hi, opts.panels, opts.nodes)
    table = rule.prefix_moments(density.pdf)
    stats = _DensityCells(table, table.total[0]).cell_stats(cb.boundaries)
    c = cb.centroids
    return float(np.sum(stats[2] - 2.0 * c * stats[1] + c * c * stats[0]))


def sample_distortion(cb: Codebook, samples: np.ndarray) -> float:
    x = np.asarray(samples, dtype=np.float64).reshape(-1)
    return float(np.mean((x - cb.centroids[quantize_index(cb, x)]) ** 2))


def cell_conditional_means(cb: Codebook, density: DensitySpec, opts: Optional[TrainingOptions] = None) -> np.ndarray:
    """码本边界所定义单元在密度下的条件均值"""
    opts = opts or TrainingOptions()
    rule = CompositeGaussLegendre(density.lo, density.hi, opts.panels, opts.nodes)
    table = rule.prefix_moments(density.pdf)
    stats = _DensityCells(table, table.total[0]).cell_stats(cb.boundaries)
    return stats[1] / stats[0]
