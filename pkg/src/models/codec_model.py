# -*- coding: utf-8 -*-
"""
编解码器数据模型
Codec Model

定义编解码配置与压缩后的键状态：
- CodecConfig：维度、位分配、舍入模式、旋转/QJL 种子
- CompressedKey / CompressedCache：单个键与一批键的压缩状态
- BaselineConfig / BaselineState：对比基线的配置与状态
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterator, Optional, Sequence

import numpy as np

# 默认的 QJL 种子偏移（保证与旋转种子不同）
QJL_SEED_OFFSET = 0x9E3779B9
MAX_STREAM_BITS = 8


def _is_power_of_two(n: int) -> bool:
    return n >= 2 and (n & (n - 1)) == 0


def triplet_count(dim: int) -> int:
    return (int(dim) + 2) // 3


class RoundingMode(Enum):
    """方向联合舍入的候选集"""
    SCALAR = "scalar"        # 仅标量种子
    LOCAL2X2 = "local2x2"    # 种子及其 +1 邻居
    LOCAL3X3 = "local3x3"    # 种子周围 3×3
    FULL = "full"            # 全部 2^(2·b_dir) 个方向


@dataclass(frozen=True)
class CodecConfig:
    """编解码配置，完全确定一个编解码实例"""

    dim: int
    b_dir: int
    b_nrm: int
    rounding: RoundingMode = RoundingMode.LOCAL3X3
    rotation_seed: int = 0
    qjl: bool = False
    qjl_seed: int = QJL_SEED_OFFSET

    def __post_init__(self):
        if not _is_power_of_two(int(self.dim)):
            raise ValueError(f"维度必须是不小于2的2的幂: {self.dim}")
        for name in ("b_dir", "b_nrm"):
            bits = getattr(self, name)
            if not 1 <= int(bits) <= MAX_STREAM_BITS:
                raise ValueError(f"{name} 必须在 [1, {MAX_STREAM_BITS}] 内: {bits}")
        if isinstance(self.rounding, str):
            object.__setattr__(self, "rounding", RoundingMode(self.rounding))
        if self.qjl and self.qjl_seed == self.rotation_seed:
            raise ValueError("QJL 种子必须与旋转种子不同")

    @classmethod
    def for_seed(cls, dim: int, b_dir: int, b_nrm: int, seed: int,
                 rounding: RoundingMode = RoundingMode.LOCAL3X3, qjl: bool = False) -> "CodecConfig":
        """由单个实验种子派生旋转与 QJL 种子"""
        return cls(dim, b_dir, b_nrm, rounding, seed, qjl, seed + QJL_SEED_OFFSET)

    @property
    def n_tri(self) -> int:
        return triplet_count(self.dim)

    @property
    def padded_dim(self) -> int:
        return 3 * self.n_tri

    def to_dict(self) -> Dict[str, Any]:
        return {
            'dim': self.dim,
            'b_dir': self.b_dir,
            'b_nrm': self.b_nrm,
            'rounding': self.rounding.value,
            'rotation_seed': self.rotation_seed,
            'qjl': self.qjl,
            'qjl_seed': self.qjl_seed,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CodecConfig":
        return cls(
            dim=int(data['dim']),
            b_dir=int(data['b_dir']),
            b_nrm=int(data['b_nrm']),
            rounding=RoundingMode(data.get('rounding', RoundingMode.LOCAL3X3.value)),
            rotation_seed=int(data.get('rotation_seed', 0)),
            qjl=bool(data.get('qjl', False)),
            qjl_seed=int(data.get('qjl_seed', QJL_SEED_OFFSET)),
        )


@dataclass(frozen=True)
class QJLSidecar:
    """一位残差草图：残差范数 (f16) 与 dim 个符号位"""

    gamma_r: np.float16
    signs: np.ndarray = field(repr=False)

    def __eq__(self, other):
        if not isinstance(other, QJLSidecar):
            return NotImplemented
        return (np.float16(self.gamma_r).tobytes() == np.float16(other.gamma_r).tobytes()
                and np.array_equal(self.signs, other.signs))


@dataclass(frozen=True)
class CompressedKey:
    """单个键的压缩状态"""

    gamma: np.float32
    dir_indices: np.ndarray = field(repr=False)
    nrm_indices: np.ndarray = field(repr=False)
    qjl: Optional[QJLSidecar] = None

    def __eq__(self, other):
        if not isinstance(other, CompressedKey):
            return NotImplemented
        return (np.float32(self.gamma).tobytes() == np.float32(other.gamma).tobytes()
                and np.array_equal(self.dir_indices, other.dir_indices)
                and np.array_equal(self.nrm_indices, other.nrm_indices)
                and self.qjl == other.qjl)


@dataclass
class CompressedCache:
    """一批压缩键（按行存储），可按下标取出 CompressedKey"""

    gamma: np.ndarray
    dir_indices: np.ndarray
    nrm_indices: np.ndarray
    gamma_r: Optional[np.ndarray] = None
    signs: Optional[np.ndarray] = None

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=np.float32).reshape(-1)
        n = self.gamma.size
        self.dir_indices = np.asarray(self.dir_indices, dtype=np.int64).reshape(n, -1)
        self.nrm_indices = np.asarray(self.nrm_indices, dtype=np.int64).reshape(n, -1)
        if (self.gamma_r is None) != (self.signs is None):
            raise ValueError("QJL 残差范数与符号位必须同时存在")
        if self.gamma_r is not None:
            self.gamma_r = np.asarray(self.gamma_r, dtype=np.float16).reshape(n)
            self.signs = np.asarray(self.signs, dtype=bool).reshape(n, -1)

    @property
    def has_qjl(self) -> bool:
        return self.gamma_r is not None

    def __len__(self) -> int:
        return int(self.gamma.size)

    def __getitem__(self, i: int) -> CompressedKey:
        side = None
        if self.has_qjl:
            side = QJLSidecar(self.gamma_r[i], self.signs[i].copy())
        return CompressedKey(self.gamma[i], self.dir_indices[i].copy(), self.nrm_indices[i].copy(), side)

    def __iter__(self) -> Iterator[CompressedKey]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other):
        if not isinstance(other, CompressedCache):
            return NotImplemented
        same = (self.gamma.tobytes() == other.gamma.tobytes()
                and np.array_equal(self.dir_indices, other.dir_indices)
                and np.array_equal(self.nrm_indices, other.nrm_indices)
                and self.has_qjl == other.has_qjl)
        if same and self.has_qjl:
            same = self.gamma_r.tobytes() == other.gamma_r.tobytes() and np.array_equal(self.signs, other.signs)
        return same

    @classmethod
    def from_keys(cls, keys: Sequence[CompressedKey]) -> "CompressedCache":
        keys = list(keys)
        if not keys:
            raise ValueError("压缩键序列为空")
        with_qjl = [k.qjl is not None for k in keys]
        if any(with_qjl) and not all(with_qjl):
            raise ValueError("压缩键的 QJL 附加信息不一致")
        return cls(
            gamma=np.array([k.gamma for k in keys], dtype=np.float32),
            dir_indices=np.stack([k.dir_indices for k in keys]),
            nrm_indices=np.stack([k.nrm_indices for k in keys]),
            gamma_r=np.array([k.qjl.gamma_r for k in keys], dtype=np.float16) if all(with_qjl) else None,
            signs=np.stack([k.qjl.signs for k in keys]) if all(with_qjl) else None,
        )


class BaselineKind(Enum):
    """对比基线类型，值即 OCTB 文件中的 kind 字节"""
    TQ_MSE = 0   # 逐坐标 Lloyd-Max
    TQ_QJL = 1   # (b-1) 位 MSE 阶段 + 一位残差
    POLAR = 2    # 递归极坐标角度


@dataclass(frozen=True)
class BaselineConfig:
    """对比基线配置"""

    kind: BaselineKind
    dim: int
    bits: int
    rotation_seed: int = 0
    qjl_seed: int = QJL_SEED_OFFSET

    def __post_init__(self):
        if isinstance(self.kind, str):
            object.__setattr__(self, "kind", BaselineKind[self.kind.upper()])
        if not _is_power_of_two(int(self.dim)):
            raise ValueError(f"维度必须是不小于2的2的幂: {self.dim}")
        if not 1 <= int(self.bits) <= MAX_STREAM_BITS:
            raise ValueError(f"位数必须在 [1, {MAX_STREAM_BITS}] 内: {self.bits}")
        if self.kind is BaselineKind.TQ_QJL:
            if self.bits < 2:
                raise ValueError("TQ-QJL 至少需要 2 位（1 位用于残差）")
            if self.qjl_seed == self.rotation_seed:
                raise ValueError("QJL 种子必须与旋转种子不同")

    @classmethod
    def for_seed(cls, kind: BaselineKind, dim: int, bits: int, seed: int) -> "BaselineConfig":
        return cls(kind, dim, bits, seed, seed + QJL_SEED_OFFSET)

    @property
    def stage_bits(self) -> int:
        """每个存储值的位数（TQ-QJL 的 MSE 阶段少 1 位）"""
        return self.bits - 1 if self.kind is BaselineKind.TQ_QJL else self.bits

    @property
    def value_count(self) -> int:
        """每个键存储的标量个数：坐标或角度"""
        return self.dim - 1 if self.kind is BaselineKind.POLAR else self.dim

    def to_dict(self) -> Dict[str, Any]:
        return {
            'kind': self.kind.name.lower(),
            'dim': self.dim,
            'bits': self.bits,
            'rotation_seed': self.rotation_seed,
            'qjl_seed': self.qjl_seed,
        }


@dataclass
class BaselineState:
    """一批键的基线压缩状态"""

    kind: BaselineKind
    gamma: np.ndarray
    indices: np.ndarray
    gamma_r: Optional[np.ndarray] = None
    signs: Optional[np.ndarray] = None

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=np.float32).reshape(-1)
        self.indices = np.asarray(self.indices, dtype=np.int64).reshape(self.gamma.size, -1)
        if self.gamma_r is not None:
            self.gamma_r = np.asarray(self.gamma_r, dtype=np.float16).reshape(-1)
            self.signs = np.asarray(self.signs, dtype=bool).reshape(self.gamma.size, -1)

    def __len__(self) -> int:
        return int(self.gamma.size)

    def __eq__(self, other):
        if not isinstance(other, BaselineState):
            return NotImplemented
        same = (self.kind == other.kind and self.gamma.tobytes() == other.gamma.tobytes()
                and np.array_equal(self.indices, other.indices)
                and (self.gamma_r is None) == (other.gamma_r is None))
        if same and self.gamma_r is not None:
            same = self.gamma_r.tobytes() == other.gamma_r.tobytes() and np.array_equal(self.signs, other.signs)
        return same

    def stage_one(self) -> "BaselineState":
        """去掉残差草图后的 MSE 阶段状态"""
        return BaselineState(BaselineKind.TQ_MSE, self.gamma.copy(), self.indices.copy())
