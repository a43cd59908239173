# -*- coding: utf-8 -*-
"""
定长整数位流打包
Fixed-width integer bit packing

小端位序：第 0 个索引占据第一个字节的最低位。每行（每个键的每个流）单独按字节对齐，
填充位写 0，读取时非零填充视为格式错误。
"""

from __future__ import annotations

import numpy as np

from ..models.base_model import FormatError


def packed_size(count: int, bits: int) -> int:
    """count 个 bits 位整数打包后的字节数"""
    return (int(count) * int(bits) + 7) // 8


def pack_index_rows(indices: np.ndarray, bits: int) -> np.ndarray:
    """(n, count) 索引 → (n, packed_size) uint8"""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 2:
        raise ValueError(f"索引数组必须是二维: {idx.shape}")
    if np.any(idx < 0) or np.any(idx >= (1 << bits)):
        raise FormatError(f"索引超出 {bits} 位范围")
    bit_mat = ((idx[..., None] >> np.arange(bits, dtype=np.int64)) & 1).astype(np.uint8)
    flat = bit_mat.reshape(idx.shape[0], -1)
    if flat.shape[1] == 0:
        return np.zeros((idx.shape[0], 0), dtype=np.uint8)
    return np.packbits(flat, axis=1, bitorder="little")


def unpack_index_rows(data: np.ndarray, count: int, bits: int) -> np.ndarray:
    """(n, packed_size) uint8 → (n, count) 索引"""
    raw = np.asarray(data, dtype=np.uint8)
    if raw.ndim != 2 or raw.shape[1] != packed_size(count, bits):
        raise FormatError(f"位流形状 {raw.shape} 与 {count}×{bits} 位不符")
    bit_arr = np.unpackbits(raw, axis=1, bitorder="little")
    used = count * bits
    if np.any(bit_arr[:, used:]):
        raise FormatError("位流填充位非零")
    bit_mat = bit_arr[:, :used].reshape(raw.shape[0], count, bits).astype(np.int64)
    return (bit_mat << np.arange(bits, dtype=np.int64)).sum(axis=2)


def pack_indices(indices: np.ndarray, bits: int) -> bytes:
    """单行索引打包为字节"""
    return pack_index_rows(np.asarray(indices).reshape(1, -1), bits).tobytes()


def unpack_indices(data: bytes, count: int, bits: int) -> np.ndarray:
    raw = np.frombuffer(data, dtype=np.uint8).reshape(1, -1)
    return unpack_index_rows(raw, count, bits)[0]


def pack_sign_rows(flags: np.ndarray) -> np.ndarray:
    """(n, d) 布尔 → (n, ceil(d/8)) uint8，位为 1 表示 +1"""
    return pack_index_rows(np.asarray(flags, dtype=np.int64), 1)


def unpack_sign_rows(data: np.ndarray, count: int) -> np.ndarray:
    return unpack_index_rows(data, count, 1).astype(bool)
