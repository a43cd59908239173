# -*- coding: utf-8 -*-
"""
八面体球面参数化
Octahedral parameterization of S²

单位三维向量折叠到正方形 [-1,1]² 及其逆映射，约定 sign(0) = +1。
另提供折叠坐标 ξ 的解析边缘密度。
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .quadrature import CompositeGaussLegendre, MomentTable

EPS = 1e-12


def sign_not_zero(x: np.ndarray) -> np.ndarray:
    """sign(0) = +1 的符号函数"""
    return np.where(np.asarray(x) >= 0.0, 1.0, -1.0)


@dataclass(frozen=True)
class OctCoords:
    """八面体坐标 (ξ, η)，构造时截断到 [-1, 1]"""

    xi: float
    eta: float

    def __post_init__(self):
        object.__setattr__(self, "xi", float(np.clip(self.xi, -1.0, 1.0)))
        object.__setattr__(self, "eta", float(np.clip(self.eta, -1.0, 1.0)))

    def as_array(self) -> np.ndarray:
        return np.array([self.xi, self.eta])


def oct_encode_array(n: np.ndarray) -> np.ndarray:
    """(..., 3) → (..., 2)，零向量映射到 (0, 0)"""
    n = np.asarray(n, dtype=np.float64)
    ell = np.abs(n).sum(axis=-1, keepdims=True)
    p = n / np.maximum(ell, EPS)
    px, py, pz = p[..., 0], p[..., 1], p[..., 2]
    upper = pz >= 0.0
    xi = np.where(upper, px, sign_not_zero(px) * (1.0 - np.abs(py)))
    eta = np.where(upper, py, sign_not_zero(py) * (1.0 - np.abs(px)))
    return np.clip(np.stack([xi, eta], axis=-1), -1.0, 1.0)


def oct_decode_array(c: np.ndarray) -> np.ndarray:
    """(..., 2) → (..., 3) 单位向量"""
    c = np.asarray(c, dtype=np.float64)
    xi, eta = c[..., 0], c[..., 1]
    r = 1.0 - np.abs(xi) - np.abs(eta)
    lower = r < 0.0
    x = np.where(lower, sign_not_zero(xi) * (1.0 - np.abs(eta)), xi)
    y = np.where(lower, sign_not_zero(eta) * (1.0 - np.abs(xi)), eta)
    v = np.stack([x, y, r], axis=-1)
    return v / np.maximum(np.linalg.norm(v, axis=-1, keepdims=True), EPS)


def oct_encode(n) -> OctCoords:
    """单个单位向量的折叠"""
    xi, eta = oct_encode_array(np.asarray(n, dtype=np.float64).reshape(3))
    return OctCoords(xi, eta)


def oct_decode(c: OctCoords) -> np.ndarray:
    return oct_decode_array(np.array([c.xi, c.eta]))


def _xi_density(a: np.ndarray) -> np.ndarray:
    head = 1.0 / (np.pi * np.sqrt(a * a + (1.0 - a) ** 2))
    tail = (1.0 - a) / (1.0 - 2.0 * a + 3.0 * a * a) + a / (2.0 - 4.0 * a + 3.0 * a * a)
    return head * tail


def oct_xi_density(xi):
    """ξ 的边缘密度（η 同分布），|ξ| ≤ 1"""
    x = np.asarray(xi, dtype=np.float64)
    if np.any(np.abs(x) > 1.0) or not np.all(np.isfinite(x)):
        raise ValueError(f"八面体坐标超出定义域 [-1, 1]: {xi}")
    out = _xi_density(np.abs(x))
    return float(out) if out.ndim == 0 else out


@lru_cache(maxsize=1)
def _xi_half_table() -> MomentTable:
    return CompositeGaussLegendre(0.0, 1.0).prefix_moments(_xi_density)


def oct_xi_cdf(xi):
    """ξ 的累积分布函数；由对称性只积分 [0, |ξ|]"""
    x = np.asarray(xi, dtype=np.float64)
    if np.any(np.abs(x) > 1.0):
        raise ValueError(f"八面体坐标超出定义域 [-1, 1]: {xi}")
    flat = x.reshape(-1)
    half = _xi_half_table().at(np.abs(flat))[0]
    out = 0.5 + np.sign(flat) * half
    return float(out[0]) if x.ndim == 0 else out.reshape(x.shape)
