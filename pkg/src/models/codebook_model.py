# -*- coding: utf-8 -*-
"""
码本数据模型
Codebook Model

一维 Lloyd-Max 量化器：有序质心、相邻质心中点作为边界、定义域与类型。
磁盘格式（小端）：
    "OCBK" | version u8 | kind u8 | bits u8 | reserved u8 | dim u32 | lo f64 | hi f64
    随后 2^bits 个 f32 质心；边界在加载时由质心重新计算，不存储。
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict

import numpy as np

from .base_model import FormatError

CODEBOOK_MAGIC = b"OCBK"
CODEBOOK_VERSION = 1
_HEADER = struct.Struct("<4sBBBBIdd")
MAX_BITS = 8


class CodebookKind(Enum):
    """码本类型，值即文件中的 kind 字节"""
    OCT_COORD = 0      # 八面体坐标 ξ/η
    TRIPLET_NORM = 1   # 三元组范数 ρ
    ROTATED_COORD = 2  # 旋转后坐标（逐坐标基线）
    CUSTOM = 3         # 其他（如极坐标角度）


@dataclass(frozen=True)
class Codebook:
    """一维标量量化码本，构造后不可变"""

    kind: CodebookKind
    bits: int
    centroids: np.ndarray = field(repr=False)
    lo: float = -1.0
    hi: float = 1.0
    dim: int = 0
    distortion: float = field(default=float("nan"), compare=False)

    def __post_init__(self):
        if not 1 <= int(self.bits) <= MAX_BITS:
            raise ValueError(f"码本位数必须在 [1, {MAX_BITS}] 内: {self.bits}")
        c = np.array(self.centroids, dtype=np.float64).reshape(-1)
        if c.size != 1 << int(self.bits):
            raise ValueError(f"质心个数 {c.size} 与位数 {self.bits} 不符")
        if not np.all(np.isfinite(c)) or np.any(np.diff(c) <= 0.0):
            raise ValueError("质心必须有限且严格递增")
        if c[0] < self.lo or c[-1] > self.hi:
            raise ValueError(f"质心超出定义域 [{self.lo}, {self.hi}]")
        c.setflags(write=False)
        b = (c[:-1] + c[1:]) / 2.0
        b.setflags(write=False)
        object.__setattr__(self, "bits", int(self.bits))
        object.__setattr__(self, "centroids", c)
        object.__setattr__(self, "_boundaries", b)

    @property
    def size(self) -> int:
        return 1 << self.bits

    @property
    def boundaries(self) -> np.ndarray:
        return self._boundaries

    def to_storage_precision(self) -> "Codebook":
        """质心舍入到 f32，与文件中保存的一致"""
        c32 = self.centroids.astype(np.float32).astype(np.float64)
        return Codebook(self.kind, self.bits, c32, self.lo, self.hi, self.dim, self.distortion)

    def __eq__(self, other):
        if not isinstance(other, Codebook):
            return NotImplemented
        return (self.kind == other.kind and self.bits == other.bits and self.dim == other.dim
                and self.lo == other.lo and self.hi == other.hi
                and np.array_equal(self.centroids, other.centroids))

    def __hash__(self):
        return hash((self.kind, self.bits, self.dim, self.centroids.tobytes()))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'kind': self.kind.name,
            'bits': self.bits,
            'dim': self.dim,
            'lo': self.lo,
            'hi': self.hi,
            'centroids': self.centroids.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Codebook":
        return cls(
            CodebookKind[data['kind']], data['bits'], np.asarray(data['centroids']),
            data.get('lo', -1.0), data.get('hi', 1.0), data.get('dim', 0),
        )


def serialize_codebook(cb: Codebook) -> bytes:
    head = _HEADER.pack(CODEBOOK_MAGIC, CODEBOOK_VERSION, cb.kind.value, cb.bits, 0,
                        cb.dim, cb.lo, cb.hi)
    return head + cb.centroids.astype("<f4").tobytes()


def deserialize_codebook(blob: bytes) -> Codebook:
    if len(blob) < _HEADER.size:
        raise FormatError(f"码本数据过短: {len(blob)} 字节")
    magic, version, kind, bits, _reserved, dim, lo, hi = _HEADER.unpack_from(blob, 0)
    if magic != CODEBOOK_MAGIC:
        raise FormatError(f"码本魔数错误: {magic!r}")
    if version != CODEBOOK_VERSION:
        raise FormatError(f"不支持的码本版本: {version}")
    if not 1 <= bits <= MAX_BITS:
        raise FormatError(f"码本位数非法: {bits}")
    try:
        kind_enum = CodebookKind(kind)
    except ValueError as e:
        raise FormatError(f"未知码本类型: {kind}") from e
    expected = _HEADER.size + 4 * (1 << bits)
    if len(blob) != expected:
        raise FormatError(f"码本长度 {len(blob)} 与预期 {expected} 不符")
    centroids = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).astype(np.float64)
    try:
        return Codebook(kind_enum, bits, centroids, lo, hi, dim)
    except ValueError as e:
        raise FormatError(f"码本内容无效: {e}") from e
