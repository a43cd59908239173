# -*- coding: utf-8 -*-
"""
解析边缘密度与确定性采样
Analytic marginals and deterministic samplers

- 旋转后单个坐标的密度 (1-u²)^((d-3)/2)
- 三元组范数 ρ 的密度 2r²(1-r²)^((d-5)/2) / B(3/2, (d-3)/2)
- 八面体坐标密度（见 octahedral 模块）
- 基于计数器的 Philox 采样流

Beta 归一化常数全部在对数空间计算，d=256 时也不会溢出。
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Tuple

import numpy as np
from scipy.special import betainc, betaln
from scipy.stats import norm

from .octahedral import _xi_density, oct_xi_cdf
from .quadrature import CompositeGaussLegendre

GAUSSIAN_HALF_WIDTH = 8.0
# E[ρ²] = 3/d 的相对容差
MOMENT_RTOL = 1e-6


class DensityKind(Enum):
    """训练密度类型"""
    ROTATED_COORD = "rotated-coordinate"  # 旋转后坐标
    TRIPLET_NORM = "triplet-norm"         # 三元组范数
    OCT_COORD = "oct-coordinate"          # 八面体坐标
    UNIFORM = "uniform"                   # 均匀分布
    UNIT_GAUSSIAN = "unit-gaussian"       # 标准正态（截断到 ±8）
    POLAR_ANGLE = "polar-angle"           # 极坐标内部角度，dim 为半块大小 m


def _check_coord_dim(d: int):
    if d < 4:
        raise ValueError(f"坐标密度要求 d ≥ 4: {d}")


def _check_norm_dim(d: int):
    if d < 5:
        raise ValueError(f"三元组范数密度要求 d ≥ 5: {d}")


def _coord_pdf(u: np.ndarray, d: int) -> np.ndarray:
    a = (d - 1) / 2.0
    log_norm = betaln(a, a) + (d - 2) * np.log(2.0)
    base = np.clip(1.0 - u * u, 0.0, None)
    with np.errstate(divide="ignore"):
        return np.exp((a - 1.0) * np.log(base) - log_norm)


def _norm_pdf(r: np.ndarray, d: int) -> np.ndarray:
    log_norm = betaln(1.5, (d - 3) / 2.0)
    base = np.clip(1.0 - r * r, 0.0, None)
    with np.errstate(divide="ignore"):
        tail = np.exp((d - 5) / 2.0 * np.log(base)) if d != 5 else np.ones_like(base)
    return 2.0 * r * r * tail * np.exp(-log_norm)


def _polar_angle_pdf(psi: np.ndarray, m: int) -> np.ndarray:
    # ∝ sin^(m-1)(2ψ)，[0, π/2] 上的归一化常数为 B(1/2, m/2) / 2
    log_norm = betaln(0.5, m / 2.0) - np.log(2.0)
    base = np.clip(np.sin(2.0 * psi), 0.0, None)
    with np.errstate(divide="ignore"):
        return np.exp((m - 1) * np.log(base) - log_norm)


def coord_density(u, d: int):
    """旋转后单坐标的边缘密度，|u| ≤ 1，d ≥ 4"""
    _check_coord_dim(d)
    x = np.asarray(u, dtype=np.float64)
    if np.any(np.abs(x) > 1.0) or not np.all(np.isfinite(x)):
        raise ValueError(f"坐标超出定义域 [-1, 1]: {u}")
    out = _coord_pdf(x, d)
    return float(out) if out.ndim == 0 else out


def coord_cdf(u, d: int):
    _check_coord_dim(d)
    a = (d - 1) / 2.0
    t = (np.clip(np.asarray(u, dtype=np.float64), -1.0, 1.0) + 1.0) / 2.0
    return betainc(a, a, t)


def triplet_norm_density(r, d: int):
    """三元组范数 ρ 的密度，0 ≤ r ≤ 1，d ≥ 5"""
    _check_norm_dim(d)
    x = np.asarray(r, dtype=np.float64)
    if np.any(x < 0.0) or np.any(x > 1.0) or not np.all(np.isfinite(x)):
        raise ValueError(f"范数超出定义域 [0, 1]: {r}")
    out = _norm_pdf(x, d)
    return float(out) if out.ndim == 0 else out


def triplet_norm_cdf(r, d: int):
    # ρ² ~ Beta(3/2, (d-3)/2)
    _check_norm_dim(d)
    x = np.clip(np.asarray(r, dtype=np.float64), 0.0, 1.0)
    return betainc(1.5, (d - 3) / 2.0, x * x)


@dataclass(frozen=True)
class DensitySpec:
    """一维训练密度：类型、维度参数与定义域"""

    kind: DensityKind
    dim: int = 0
    lo: float = -1.0
    hi: float = 1.0

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError(f"定义域无效: [{self.lo}, {self.hi}]")
        if self.kind is DensityKind.ROTATED_COORD:
            _check_coord_dim(self.dim)
        elif self.kind is DensityKind.TRIPLET_NORM:
            _check_norm_dim(self.dim)
        elif self.kind is DensityKind.POLAR_ANGLE and self.dim < 2:
            raise ValueError(f"极坐标角度密度要求 m ≥ 2: {self.dim}")

    @classmethod
    def rotated_coordinate(cls, d: int) -> "DensitySpec":
        return cls(DensityKind.ROTATED_COORD, d, -1.0, 1.0)

    @classmethod
    def triplet_norm(cls, d: int) -> "DensitySpec":
        return cls(DensityKind.TRIPLET_NORM, d, 0.0, 1.0)

    @classmethod
    def oct_coordinate(cls) -> "DensitySpec":
        return cls(DensityKind.OCT_COORD, 0, -1.0, 1.0)

    @classmethod
    def uniform(cls, lo: float = -1.0, hi: float = 1.0) -> "DensitySpec":
        return cls(DensityKind.UNIFORM, 0, lo, hi)

    @classmethod
    def polar_angle(cls, m: int) -> "DensitySpec":
        return cls(DensityKind.POLAR_ANGLE, m, 0.0, np.pi / 2.0)

    @classmethod
    def unit_gaussian(cls) -> "DensitySpec":
        return cls(DensityKind.UNIT_GAUSSIAN, 0, -GAUSSIAN_HALF_WIDTH, GAUSSIAN_HALF_WIDTH)

    @property
    def domain(self) -> Tuple[float, float]:
        return (self.lo, self.hi)

    def pdf(self, x: np.ndarray) -> np.ndarray:
        """向量化密度，定义域外为 0"""
        x = np.asarray(x, dtype=np.float64)
        inside = (x >= self.lo) & (x <= self.hi)
        xc = np.clip(x, self.lo, self.hi)
        if self.kind is DensityKind.ROTATED_COORD:
            out = _coord_pdf(xc, self.dim)
        elif self.kind is DensityKind.TRIPLET_NORM:
            out = _norm_pdf(xc, self.dim)
        elif self.kind is DensityKind.OCT_COORD:
            out = _xi_density(np.abs(xc))
        elif self.kind is DensityKind.POLAR_ANGLE:
            out = _polar_angle_pdf(xc, self.dim)
        elif self.kind is DensityKind.UNIFORM:
            out = np.full_like(xc, 1.0 / (self.hi - self.lo))
        else:
            out = np.exp(-0.5 * xc * xc) / np.sqrt(2.0 * np.pi)
        return np.where(inside, out, 0.0)

    def cdf(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.kind is DensityKind.ROTATED_COORD:
            return coord_cdf(x, self.dim)
        if self.kind is DensityKind.TRIPLET_NORM:
            return triplet_norm_cdf(x, self.dim)
        if self.kind is DensityKind.OCT_COORD:
            return oct_xi_cdf(np.clip(x, -1.0, 1.0))
        if self.kind is DensityKind.POLAR_ANGLE:
            # sin²ψ ~ Beta(m/2, m/2)
            return betainc(self.dim / 2.0, self.dim / 2.0, np.sin(np.clip(x, self.lo, self.hi)) ** 2)
        if self.kind is DensityKind.UNIFORM:
            return np.clip((x - self.lo) / (self.hi - self.lo), 0.0, 1.0)
        return norm.cdf(x)

    def to_dict(self) -> dict:
        return {'kind': self.kind.value, 'dim': self.dim, 'lo': self.lo, 'hi': self.hi}


@dataclass(frozen=True)
class SampleStream:
    """计数器型随机流：(seed, stream) 唯一确定输出，与调用顺序无关"""

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream),))
        return np.random.Generator(np.random.Philox(seq))

    def child(self, index: int) -> "SampleStream":
        """派生子流（按线程或按批次划分）"""
        return SampleStream(self.seed, (self.stream << 20) + int(index) + 1)


def sample_unit_sphere(dim: int, stream: SampleStream, count: int) -> np.ndarray:
    """S^{dim-1} 上的均匀样本：高斯向量归一化"""
    if dim < 1:
        raise ValueError(f"维度必须为正: {dim}")
    g = stream.generator().standard_normal((int(count), int(dim)))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    return g / np.maximum(norms, np.finfo(np.float64).tiny)


def sample_triplet_norms(dim: int, stream: SampleStream, count: int) -> np.ndarray:
    """均匀球面向量前三个坐标的范数"""
    u = sample_unit_sphere(dim, stream, count)
    return np.linalg.norm(u[:, :3], axis=1)


def triplet_norm_moments(d: int) -> Tuple[float, float]:
    """数值求积得到 (E[ρ], E[ρ²])"""
    _check_norm_dim(d)
    rule = CompositeGaussLegendre(0.0, 1.0)
    m1 = rule.integrate(lambda r: r * _norm_pdf(r, d))
    m2 = rule.integrate(lambda r: r * r * _norm_pdf(r, d))
    return m1, m2


def triplet_norm_variance(d: int) -> float:
    """Var(ρ) = E[ρ²] - E[ρ]²；E[ρ²] 必须等于 3/d"""
    m1, m2 = triplet_norm_moments(d)
    if abs(m2 - 3.0 / d) > MOMENT_RTOL * 3.0 / d:
        raise RuntimeError(f"E[ρ²] 求积偏差 {m2 - 3.0 / d:.3e} 超出容差 (d={d})")
    return m2 - m1 * m1
