# -*- coding: utf-8 -*-
"""
随机符号 Walsh-Hadamard 旋转
Sign-flipped Walsh-Hadamard rotation

R = H·diag(s)，H 为归一化 Hadamard 矩阵；R⁻¹ = diag(s)·H。
蝶形运算为 O(d log d)，1/√d 缩放只在最后一步乘一次，正反两个方向共用。
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .marginals import SampleStream

# 旋转符号使用的子流编号
SIGN_STREAM = 0x5167


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def fwht(x: np.ndarray) -> np.ndarray:
    """沿最后一维做未归一化的快速 Walsh-Hadamard 变换，返回新数组"""
    x = np.array(x, dtype=np.float64, copy=True)
    d = x.shape[-1]
    if not is_power_of_two(d):
        raise ValueError(f"维度必须是2的幂: {d}")
    lead = x.shape[:-1]
    h = 1
    while h < d:
        y = x.reshape(lead + (d // (2 * h), 2, h))
        a = y[..., 0, :].copy()
        b = y[..., 1, :]
        y[..., 0, :] = a + b
        y[..., 1, :] = a - b
        h *= 2
    return x


@dataclass(frozen=True)
class RotationSpec:
    """正交预处理器 R = H·diag(s) 的描述"""

    dim: int
    seed: int
    signs: np.ndarray = field(repr=False, compare=False)

    def __post_init__(self):
        if not is_power_of_two(self.dim) or self.dim < 2:
            raise ValueError(f"旋转维度必须是不小于2的2的幂: {self.dim}")
        signs = np.asarray(self.signs, dtype=np.float64)
        if signs.shape != (self.dim,) or not np.all(np.abs(signs) == 1.0):
            raise ValueError("符号向量必须为长度 dim 的 ±1 向量")
        signs.setflags(write=False)
        object.__setattr__(self, "signs", signs)

    @property
    def scale(self) -> float:
        return 1.0 / np.sqrt(self.dim)


def make_rotation(dim: int, seed: int) -> RotationSpec:
    """由 (dim, seed) 确定性地生成旋转"""
    if not isinstance(dim, (int, np.integer)) or not is_power_of_two(int(dim)) or dim < 2:
        raise ValueError(f"旋转维度必须是不小于2的2的幂: {dim}")
    bits = SampleStream(seed, SIGN_STREAM).generator().integers(0, 2, size=int(dim))
    signs = np.where(bits == 1, 1.0, -1.0)
    return RotationSpec(int(dim), int(seed), signs)


def _check(spec: RotationSpec, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim == 0 or v.shape[-1] != spec.dim:
        raise ValueError(f"向量长度 {v.shape[-1] if v.ndim else 0} 与旋转维度 {spec.dim} 不匹配")
    return v


def rotate(spec: RotationSpec, v: np.ndarray) -> np.ndarray:
    """u = H·(s ⊙ v)，支持按行批量"""
    v = _check(spec, v)
    return fwht(v * spec.signs) * spec.scale


def rotate_inverse(spec: RotationSpec, v: np.ndarray) -> np.ndarray:
    """v = s ⊙ (H·u)"""
    v = _check(spec, v)
    return fwht(v) * spec.scale * spec.signs
