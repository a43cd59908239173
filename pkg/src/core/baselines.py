# -*- coding: utf-8 -*-
"""
对比基线编解码器
Baseline codecs

与 OCTOPUS 共用旋转、Lloyd-Max 与 QJL 组件：
- TQ-MSE：旋转后逐坐标 Lloyd-Max 量化
- TQ-QJL：(b-1) 位 TQ-MSE 阶段 + 一位残差草图（草图计入码率；基准打分只用阶段一）
- Polar：递归极坐标角度（叶子为平面角 φ ∈ [-π, π)，内部为 ψ ∈ [0, π/2]）

二进制布局（小端）：
    "OCTB" | version u8 | kind u8 | bits u8 | flags u8 (bit0 = QJL) | dim u32 | key_count u64
    每个键：γ f32 | 索引流 | [γ_r f16 | 符号位]
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..models.base_model import FormatError
from ..models.codebook_model import Codebook, CodebookKind
from ..models.codec_model import BaselineConfig, BaselineKind, BaselineState
from .lloydmax import TrainingOptions, quantize_index, train_from_density, train_from_samples
from .marginals import DensitySpec, SampleStream, sample_unit_sphere
from .octahedral import EPS
from .packing import pack_index_rows, pack_sign_rows, packed_size, unpack_index_rows, unpack_sign_rows
from .qjl import qjl_correction, qjl_sketch
from .rotation import make_rotation, rotate, rotate_inverse

logger = logging.getLogger(__name__)

BASELINE_MAGIC = b"OCTB"
BASELINE_VERSION = 1
FLAG_QJL = 0x01
_HEADER = struct.Struct("<4sBBBBIQ")

# 叶子角度码本的经验训练样本
POLAR_LEAF_SEED = 0x9017A4
POLAR_LEAF_VECTORS = 1 << 16


@dataclass(frozen=True)
class PolarBooks:
    """极坐标码本：叶子平面角 + 第 2..L 层内部角"""

    leaf: Codebook
    levels: Tuple[Codebook, ...]

    @property
    def bits(self) -> int:
        return self.leaf.bits


def _unit_rotated(cfg: BaselineConfig, keys: np.ndarray):
    k = np.asarray(keys, dtype=np.float64)
    if k.ndim == 1:
        k = k[None, :]
    if k.ndim != 2 or k.shape[1] != cfg.dim:
        raise ValueError(f"键形状 {np.shape(keys)} 与维度 {cfg.dim} 不匹配")
    if not np.all(np.isfinite(k)):
        raise ValueError("键包含非有限值")
    gamma = np.linalg.norm(k, axis=1)
    u = rotate(make_rotation(cfg.dim, cfg.rotation_seed), k / np.maximum(gamma, EPS)[:, None])
    return gamma, u


def _rotate_queries(cfg: BaselineConfig, queries: np.ndarray) -> np.ndarray:
    q = np.asarray(queries, dtype=np.float64)
    if q.ndim == 1:
        q = q[None, :]
    if q.shape[-1] != cfg.dim:
        raise ValueError(f"查询维度 {q.shape[-1]} 与 {cfg.dim} 不匹配")
    return rotate(make_rotation(cfg.dim, cfg.rotation_seed), q)


# ---------------------------------------------------------------- TQ-MSE / TQ-QJL

def train_coord_book(dim: int, bits: int, opts: Optional[TrainingOptions] = None) -> Codebook:
    return train_from_density(DensitySpec.rotated_coordinate(dim), bits, opts)


def _check_coord_book(cfg: BaselineConfig, book: Codebook):
    if book.kind is not CodebookKind.ROTATED_COORD or book.bits != cfg.stage_bits or book.dim != cfg.dim:
        raise ValueError(
            f"坐标码本 (kind={book.kind.name}, b={book.bits}, d={book.dim}) "
            f"与配置 (b={cfg.stage_bits}, d={cfg.dim}) 不符")


def tq_mse_encode(cfg: BaselineConfig, book: Codebook, keys: np.ndarray) -> BaselineState:
    if cfg.kind is not BaselineKind.TQ_MSE:
        raise ValueError(f"配置类型不是 TQ-MSE: {cfg.kind}")
    _check_coord_book(cfg, book)
    gamma, u = _unit_rotated(cfg, keys)
    return BaselineState(BaselineKind.TQ_MSE, gamma, quantize_index(book, u))


def _check_state(cfg: BaselineConfig, state: BaselineState, levels: int):
    if state.indices.shape[1] != cfg.value_count:
        raise FormatError(f"索引个数 {state.indices.shape[1]} 与 {cfg.value_count} 不符")
    if np.any(state.indices < 0) or np.any(state.indices >= levels):
        raise FormatError("基线索引越界")


def tq_mse_decode(cfg: BaselineConfig, book: Codebook, state: BaselineState) -> np.ndarray:
    _check_coord_book(cfg, book)
    _check_state(cfg, state, book.size)
    unit = rotate_inverse(make_rotation(cfg.dim, cfg.rotation_seed), book.centroids[state.indices])
    return state.gamma.astype(np.float64)[:, None] * unit


def tq_mse_score(cfg: BaselineConfig, book: Codebook, queries: np.ndarray, state: BaselineState) -> np.ndarray:
    """(n_q, n)：γ · (R q)ᵀ û"""
    _check_coord_book(cfg, book)
    _check_state(cfg, state, book.size)
    q_rot = _rotate_queries(cfg, queries)
    return (q_rot @ book.centroids[state.indices].T) * state.gamma.astype(np.float64)[None, :]


def tq_qjl_encode(cfg: BaselineConfig, book: Codebook, keys: np.ndarray) -> BaselineState:
    """阶段一与同种子的 (b-1) 位 TQ-MSE 完全相同，残差用共享的 QJL 草图"""
    if cfg.kind is not BaselineKind.TQ_QJL:
        raise ValueError(f"配置类型不是 TQ-QJL: {cfg.kind}")
    _check_coord_book(cfg, book)
    gamma, u = _unit_rotated(cfg, keys)
    idx = quantize_index(book, u)
    residual = u - book.centroids[idx]
    gamma_r, signs = qjl_sketch(make_rotation(cfg.dim, cfg.qjl_seed), residual)
    return BaselineState(BaselineKind.TQ_QJL, gamma, idx, gamma_r, signs)


def tq_qjl_decode(cfg: BaselineConfig, book: Codebook, state: BaselineState) -> np.ndarray:
    return tq_mse_decode(cfg, book, state)


def tq_qjl_score(cfg: BaselineConfig, book: Codebook, queries: np.ndarray, state: BaselineState,
                 corrected: bool = False) -> np.ndarray:
    """默认只用 (b-1) 位阶段一重建打分；corrected=True 时再加草图修正"""
    base = tq_mse_score(cfg, book, queries, state)
    if not corrected:
        return base
    if state.gamma_r is None:
        raise FormatError("TQ-QJL 状态缺少残差草图")
    q_rot = _rotate_queries(cfg, queries)
    corr = qjl_correction(make_rotation(cfg.dim, cfg.qjl_seed), q_rot, state.gamma_r, state.signs)
    return base + corr * state.gamma.astype(np.float64)[None, :]


# ---------------------------------------------------------------- Polar

def _levels(dim: int) -> int:
    return int(dim).bit_length() - 1


def polar_angles(u: np.ndarray):
    """(n, d) → 叶子角 (n, d/2) 与各内部层角度列表"""
    n, d = u.shape
    pairs = u.reshape(n, d // 2, 2)
    phi = np.arctan2(pairs[..., 1], pairs[..., 0])
    phi = np.where(phi >= np.pi, -np.pi, phi)
    radii = np.hypot(pairs[..., 0], pairs[..., 1])
    inner = []
    while radii.shape[1] > 1:
        lr = radii.reshape(n, -1, 2)
        inner.append(np.arctan2(lr[..., 1], lr[..., 0]))
        radii = np.hypot(lr[..., 0], lr[..., 1])
    return phi, inner


def polar_reconstruct(phi: np.ndarray, inner) -> np.ndarray:
    """自顶向下重建单位向量：left = r cos ψ，right = r sin ψ"""
    n = phi.shape[0]
    radii = np.ones((n, 1))
    for psi in reversed(inner):
        radii = np.stack([radii * np.cos(psi), radii * np.sin(psi)], axis=-1).reshape(n, -1)
    pairs = np.stack([radii * np.cos(phi), radii * np.sin(phi)], axis=-1)
    return pairs.reshape(n, -1)


def train_polar_books(dim: int, bits: int, opts: Optional[TrainingOptions] = None,
                      n_vectors: int = POLAR_LEAF_VECTORS) -> PolarBooks:
    """叶子角在均匀球面样本上经验训练；第 ℓ 层角度按 sin^(2^(ℓ-1)-1)(2ψ) 密度训练"""
    if dim < 2 or dim & (dim - 1):
        raise ValueError(f"极坐标基线要求维度为2的幂: {dim}")
    u = sample_unit_sphere(dim, SampleStream(POLAR_LEAF_SEED, dim), n_vectors)
    phi, _ = polar_angles(u)
    leaf = train_from_samples(phi, bits, opts, CodebookKind.CUSTOM, dim, (-np.pi, np.pi))
    levels = tuple(
        train_from_density(DensitySpec.polar_angle(1 << (level - 1)), bits, opts, CodebookKind.CUSTOM)
        for level in range(2, _levels(dim) + 1)
    )
    logger.info("极坐标码本完成: d=%d, b=%d, 内部层 %d", dim, bits, len(levels))
    return PolarBooks(leaf, levels)


def _check_polar_books(cfg: BaselineConfig, books: PolarBooks):
    if books.bits != cfg.bits or len(books.levels) != _levels(cfg.dim) - 1:
        raise ValueError(f"极坐标码本与配置 (d={cfg.dim}, b={cfg.bits}) 不符")


def polar_encode(cfg: BaselineConfig, books: PolarBooks, keys: np.ndarray) -> BaselineState:
    if cfg.kind is not BaselineKind.POLAR:
        raise ValueError(f"配置类型不是 Polar: {cfg.kind}")
    _check_polar_books(cfg, books)
    gamma, u = _unit_rotated(cfg, keys)
    phi, inner = polar_angles(u)
    parts = [quantize_index(books.leaf, phi)]
    parts += [quantize_index(book, psi) for book, psi in zip(books.levels, inner)]
    return BaselineState(BaselineKind.POLAR, gamma, np.concatenate(parts, axis=1))


def _polar_unit(cfg: BaselineConfig, books: PolarBooks, state: BaselineState) -> np.ndarray:
    _check_polar_books(cfg, books)
    _check_state(cfg, state, 1 << cfg.bits)
    d = cfg.dim
    idx = state.indices
    phi = books.leaf.centroids[idx[:, :d // 2]]
    inner = []
    start = d // 2
    for book in books.levels:
        width = (d >> 1) >> (len(inner) + 1)
        inner.append(book.centroids[idx[:, start:start + width]])
        start += width
    return polar_reconstruct(phi, inner)


def polar_decode(cfg: BaselineConfig, books: PolarBooks, state: BaselineState) -> np.ndarray:
    unit = rotate_inverse(make_rotation(cfg.dim, cfg.rotation_seed), _polar_unit(cfg, books, state))
    return state.gamma.astype(np.float64)[:, None] * unit


def polar_score(cfg: BaselineConfig, books: PolarBooks, queries: np.ndarray, state: BaselineState) -> np.ndarray:
    q_rot = _rotate_queries(cfg, queries)
    return (q_rot @ _polar_unit(cfg, books, state).T) * state.gamma.astype(np.float64)[None, :]


# ---------------------------------------------------------------- 统一入口

def baseline_encode(cfg: BaselineConfig, books, keys: np.ndarray) -> BaselineState:
    if cfg.kind is BaselineKind.TQ_MSE:
        return tq_mse_encode(cfg, books, keys)
    if cfg.kind is BaselineKind.TQ_QJL:
        return tq_qjl_encode(cfg, books, keys)
    return polar_encode(cfg, books, keys)


def baseline_decode(cfg: BaselineConfig, books, state: BaselineState) -> np.ndarray:
    if cfg.kind is BaselineKind.POLAR:
        return polar_decode(cfg, books, state)
    return tq_mse_decode(cfg, books, state)


def baseline_score(cfg: BaselineConfig, books, queries: np.ndarray, state: BaselineState) -> np.ndarray:
    if cfg.kind is BaselineKind.TQ_MSE:
        return tq_mse_score(cfg, books, queries, state)
    if cfg.kind is BaselineKind.TQ_QJL:
        return tq_qjl_score(cfg, books, queries, state)
    return polar_score(cfg, books, queries, state)


def baseline_bits_per_coord(cfg: BaselineConfig) -> float:
    total = cfg.value_count * cfg.stage_bits + 32
    if cfg.kind is BaselineKind.TQ_QJL:
        total += cfg.dim + 16
    return total / cfg.dim


# ---------------------------------------------------------------- 打包

def _payload_layout(cfg: BaselineConfig):
    idx_bytes = packed_size(cfg.value_count, cfg.stage_bits)
    size = 4 + idx_bytes
    if cfg.kind is BaselineKind.TQ_QJL:
        size += 2 + packed_size(cfg.dim, 1)
    return idx_bytes, size


def pack_baseline(cfg: BaselineConfig, state: BaselineState) -> bytes:
    if state.kind is not cfg.kind:
        raise FormatError(f"状态类型 {state.kind.name} 与配置 {cfg.kind.name} 不符")
    _check_state(cfg, state, 1 << cfg.stage_bits)
    n = len(state)
    idx_bytes, size = _payload_layout(cfg)
    body = np.zeros((n, size), dtype=np.uint8)
    body[:, :4] = state.gamma.astype("<f4").view(np.uint8).reshape(n, 4)
    body[:, 4:4 + idx_bytes] = pack_index_rows(state.indices, cfg.stage_bits)
    if cfg.kind is BaselineKind.TQ_QJL:
        body[:, 4 + idx_bytes:6 + idx_bytes] = state.gamma_r.astype("<f2").view(np.uint8).reshape(n, 2)
        body[:, 6 + idx_bytes:] = pack_sign_rows(state.signs)
    flags = FLAG_QJL if cfg.kind is BaselineKind.TQ_QJL else 0
    head = _HEADER.pack(BASELINE_MAGIC, BASELINE_VERSION, cfg.kind.value, cfg.bits, flags, cfg.dim, n)
    return head + body.tobytes()


def unpack_baseline(cfg: BaselineConfig, blob: bytes) -> BaselineState:
    if len(blob) < _HEADER.size:
        raise FormatError(f"数据过短: {len(blob)} 字节")
    magic, version, kind, bits, flags, dim, count = _HEADER.unpack_from(blob, 0)
    if magic != BASELINE_MAGIC:
        raise FormatError(f"魔数错误: {magic!r}")
    if version != BASELINE_VERSION:
        raise FormatError(f"不支持的版本: {version}")
    expected_flags = FLAG_QJL if cfg.kind is BaselineKind.TQ_QJL else 0
    if (kind, bits, flags, dim) != (cfg.kind.value, cfg.bits, expected_flags, cfg.dim):
        raise FormatError(f"文件头 (kind={kind}, bits={bits}, flags={flags}, dim={dim}) 与配置不符")
    idx_bytes, size = _payload_layout(cfg)
    if len(blob) != _HEADER.size + count * size:
        raise FormatError(f"数据长度 {len(blob)} 与预期 {_HEADER.size + count * size} 不符")
    body = np.frombuffer(blob, dtype=np.uint8, offset=_HEADER.size).reshape(count, size)
    gamma = np.ascontiguousarray(body[:, :4]).view("<f4").reshape(count)
    if np.any(np.signbit(gamma)) or not np.all(np.isfinite(gamma)):
        raise FormatError("γ 必须是非负有限数")
    idx = unpack_index_rows(np.ascontiguousarray(body[:, 4:4 + idx_bytes]), cfg.value_count, cfg.stage_bits)
    gamma_r = signs = None
    if cfg.kind is BaselineKind.TQ_QJL:
        gamma_r = np.ascontiguousarray(body[:, 4 + idx_bytes:6 + idx_bytes]).view("<f2").reshape(count)
        if np.any(np.signbit(gamma_r)) or not np.all(np.isfinite(gamma_r)):
            raise FormatError("γ_r 必须是非负有限数")
        signs = unpack_sign_rows(np.ascontiguousarray(body[:, 6 + idx_bytes:]), cfg.dim)
    return BaselineState(cfg.kind, gamma, idx, gamma_r, signs)
