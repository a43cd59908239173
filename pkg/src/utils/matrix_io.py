# -*- coding: utf-8 -*-
"""
原始矩阵文件
Raw matrix files

格式："OCTM" 魔数，u32 行数，u32 列数（小端），随后是行优先的 f32 数据。
"""

import os
import struct

import numpy as np

from ..models.base_model import FormatError

MATRIX_MAGIC = b"OCTM"
_HEADER = struct.Struct("<4sII")


def encode_matrix(m: np.ndarray) -> bytes:
    arr = np.asarray(m, dtype=np.float32)
    if arr.ndim != 2:
        raise ValueError(f"只能写入二维矩阵: {arr.shape}")
    return _HEADER.pack(MATRIX_MAGIC, arr.shape[0], arr.shape[1]) + arr.astype("<f4").tobytes()


def decode_matrix(blob: bytes) -> np.ndarray:
    if len(blob) < _HEADER.size:
        raise FormatError("矩阵文件过短")
    magic, rows, cols = _HEADER.unpack_from(blob)
    if magic != MATRIX_MAGIC:
        raise FormatError(f"矩阵文件魔数错误: {magic!r}")
    expected = _HEADER.size + 4 * rows * cols
    if len(blob) != expected:
        raise FormatError(f"矩阵文件长度 {len(blob)} 与表头不符（应为 {expected}）")
    return np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).reshape(rows, cols).astype(np.float32)


def read_matrix(path: str) -> np.ndarray:
    if not os.path.exists(path):
        raise FileNotFoundError(f"矩阵文件不存在: {path}")
    with open(path, 'rb') as f:
        return decode_matrix(f.read())


def write_matrix(path: str, m: np.ndarray) -> str:
    blob = encode_matrix(m)
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, 'wb') as f:
        f.write(blob)
    return path
