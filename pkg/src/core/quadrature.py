# -*- coding: utf-8 -*-
"""
复合 Gauss-Legendre 求积
Composite Gauss-Legendre quadrature

区间被等分为固定数目的面板，每个面板使用同一组 Legendre 节点。
Lloyd-Max 训练需要在任意边界上求密度的零、一、二阶累积矩，
这里用“整面板前缀和 + 部分面板再求积”的方式计算。
"""

from __future__ import annotations

from typing import Callable, Tuple

import numpy as np
from scipy.special import roots_legendre

DEFAULT_PANELS = 4096
DEFAULT_NODES = 8

Density = Callable[[np.ndarray], np.ndarray]


class CompositeGaussLegendre:
    """[lo, hi] 上的固定面板复合 Gauss-Legendre 规则"""

    def __init__(self, lo: float, hi: float, panels: int = DEFAULT_PANELS, nodes: int = DEFAULT_NODES):
        if not hi > lo:
            raise ValueError(f"求积区间无效: [{lo}, {hi}]")
        if panels < 1 or nodes < 1:
            raise ValueError("面板数与节点数必须为正")
        self.lo = float(lo)
        self.hi = float(hi)
        self.panels = int(panels)
        self.width = (self.hi - self.lo) / self.panels
        ref_x, ref_w = roots_legendre(nodes)
        # 参考节点映射到 [0, 1]
        self._ref_x = (ref_x + 1.0) / 2.0
        self._ref_w = ref_w / 2.0
        left = self.lo + self.width * np.arange(self.panels)
        self.points = left[:, None] + self.width * self._ref_x[None, :]
        self.weights = np.broadcast_to(self.width * self._ref_w, self.points.shape)

    def integrate(self, f: Density) -> float:
        return float(np.sum(self.weights * f(self.points)))

    def prefix_moments(self, f: Density) -> "MomentTable":
        """预计算每个面板的 0/1/2 阶矩前缀和"""
        return MomentTable(self, f)


class MomentTable:
    """密度在任意边界处的累积矩 M_k(b) = ∫_lo^b x^k f(x) dx"""

    def __init__(self, rule: CompositeGaussLegendre, f: Density):
        self.rule = rule
        self.f = f
        wf = rule.weights * f(rule.points)
        if np.any(wf < 0) or not np.all(np.isfinite(wf)):
            raise ValueError("密度在求积节点上为负或非有限")
        x = rule.points
        per_panel = np.stack([wf.sum(axis=1), (wf * x).sum(axis=1), (wf * x * x).sum(axis=1)])
        self.prefix = np.concatenate([np.zeros((3, 1)), np.cumsum(per_panel, axis=1)], axis=1)

    @property
    def total(self) -> Tuple[float, float, float]:
        return tuple(float(v) for v in self.prefix[:, -1])

    def at(self, bounds: np.ndarray) -> np.ndarray:
        """返回形状 (3, len(bounds)) 的累积矩"""
        rule = self.rule
        b = np.clip(np.asarray(bounds, dtype=np.float64), rule.lo, rule.hi)
        idx = np.floor((b - rule.lo) / rule.width).astype(np.int64)
        idx = np.clip(idx, 0, rule.panels - 1)
        left = rule.lo + rule.width * idx
        span = b - left
        xs = left[:, None] + span[:, None] * rule._ref_x[None, :]
        ws = span[:, None] * rule._ref_w[None, :]
        wf = ws * self.f(xs)
        partial = np.stack([wf.sum(axis=1), (wf * xs).sum(axis=1), (wf * xs * xs).sum(axis=1)])
        return self.prefix[:, idx] + partial
