# -*- coding: utf-8 -*-
"""
一位 QJL 残差草图
One-bit QJL residual sketch

编解码器与 TQ-QJL 基线共用的实现：
    σ = sign(R′ r)，γ_r = ‖r‖₂（f16）
    修正项 = √(π/(2d)) · γ_r · (R′ q)ᵀ σ
R′ 是以独立种子生成的第二个随机符号 Hadamard 旋转。
"""

from __future__ import annotations

from typing import Tuple

import numpy as np

from .rotation import RotationSpec, rotate


def qjl_sketch(spec: RotationSpec, residual: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(n, d) 残差 → (γ_r f16[n], σ bool[n, d])，sign(0) 取 +1"""
    r = np.atleast_2d(np.asarray(residual, dtype=np.float64))
    gamma_r = np.linalg.norm(r, axis=1).astype(np.float16)
    signs = rotate(spec, r) >= 0.0
    return gamma_r, signs


def qjl_correction(spec: RotationSpec, q_rot: np.ndarray, gamma_r: np.ndarray, signs: np.ndarray) -> np.ndarray:
    """(n_q, d) 查询与 n 个草图 → (n_q, n) 内积修正（未乘 γ）"""
    z = rotate(spec, np.atleast_2d(q_rot))
    sigma = np.where(np.asarray(signs, dtype=bool), 1.0, -1.0)
    scale = np.sqrt(np.pi / (2.0 * spec.dim))
    return scale * (z @ sigma.T) * np.asarray(gamma_r, dtype=np.float64)[None, :]
