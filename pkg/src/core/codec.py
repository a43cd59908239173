# -*- coding: utf-8 -*-
"""
OCTOPUS 键编解码器
OCTOPUS key codec

编码流程（逐键，可按行批量）：
    γ = ‖k‖₂，ũ = k / max(γ, ε)，u = R ũ
    u 补零到 3·n_tri 并切成三元组 tᵢ
    每个三元组：八面体折叠 → 标量种子 → 按舍入模式搜索方向候选，
    取 sᵢ = tᵢᵀ n̂ 最大者（行优先最先出现者胜出），ρ 索引 = 距 clip(s*, 0, 1) 最近的质心
    可选 QJL：r = u - û，γ_r = ‖r‖₂ (f16)，σ = sign(R′ r)

打分不重建 k̂：score = γ · Σᵢ ρ̂ᵢ (R q)ᵢᵀ n̂ᵢ，QJL 时加上残差修正。

二进制布局（小端）：
    "OCTO" | version u8 | flags u8 (bit0 = QJL) | b_dir u8 | b_nrm u8 | dim u32 | key_count u64
    每个键：γ f32 | 方向流 | 范数流 | [γ_r f16 | 符号位]
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence, Tuple, Union

import numpy as np

from ..models.base_model import FormatError
from ..models.codebook_model import Codebook
from ..models.codec_model import CodecConfig, CompressedCache, CompressedKey, RoundingMode
from .lloydmax import quantize_index
from .octahedral import EPS, oct_decode_array, oct_encode_array
from .packing import pack_index_rows, pack_sign_rows, packed_size, unpack_index_rows, unpack_sign_rows
from .qjl import qjl_correction, qjl_sketch
from .rotation import RotationSpec, make_rotation, rotate, rotate_inverse

logger = logging.getLogger(__name__)

BLOB_MAGIC = b"OCTO"
BLOB_VERSION = 1
FLAG_QJL = 0x01
_BLOB_HEADER = struct.Struct("<4sBBBBIQ")

# 全搜索时每批处理的三元组个数
FULL_SEARCH_CHUNK = 4096

KeysLike = Union[CompressedCache, Sequence[CompressedKey]]


@dataclass(frozen=True)
class CodecBooks:
    """编解码所需的两本码本 (C_ξ, C_ρ)"""

    xi: Codebook
    rho: Codebook

    def check(self, cfg: CodecConfig):
        if self.xi.bits != cfg.b_dir:
            raise ValueError(f"方向码本位数 {self.xi.bits} 与 b_dir={cfg.b_dir} 不符")
        if self.rho.bits != cfg.b_nrm:
            raise ValueError(f"范数码本位数 {self.rho.bits} 与 b_nrm={cfg.b_nrm} 不符")
        if self.rho.dim not in (0, cfg.dim):
            raise ValueError(f"范数码本维度 {self.rho.dim} 与 dim={cfg.dim} 不符")

    @property
    def directions(self) -> np.ndarray:
        """所有 (jξ, jη) 的解码方向，行优先，形状 (K², 3)"""
        return _direction_table(self.xi)


@lru_cache(maxsize=64)
def _direction_table(xi: Codebook) -> np.ndarray:
    c = xi.centroids
    gx, gy = np.meshgrid(c, c, indexing="ij")
    table = oct_decode_array(np.stack([gx.ravel(), gy.ravel()], axis=-1))
    table.setflags(write=False)
    return table


@lru_cache(maxsize=64)
def _rotation(dim: int, seed: int) -> RotationSpec:
    return make_rotation(dim, seed)


def default_bit_split(b: int) -> Tuple[int, int]:
    """标称 b 位的 (b_dir, b_nrm) = (b+1, b-1)"""
    if int(b) < 2:
        raise ValueError(f"默认位分配要求 b ≥ 2: {b}")
    return int(b) + 1, int(b) - 1


def effective_bits_per_coord(cfg: CodecConfig) -> float:
    """键侧每坐标有效位数（含 γ 与可选 QJL 附加信息）"""
    n_tri = cfg.n_tri
    total = 2 * n_tri * cfg.b_dir + n_tri * cfg.b_nrm + 32
    if cfg.qjl:
        total += cfg.dim + 16
    return total / cfg.dim


# ---------------------------------------------------------------- 联合舍入

def _candidates(jx: np.ndarray, jy: np.ndarray, k: int, mode: RoundingMode) -> np.ndarray:
    """(m,) 种子 → (m, C) 行优先扁平候选索引"""
    if mode is RoundingMode.SCALAR:
        return (jx * k + jy)[:, None]
    if mode is RoundingMode.LOCAL2X2:
        # 窗口起点下移到 K-2，保证两列不同
        sx = np.minimum(jx, k - 2)
        sy = np.minimum(jy, k - 2)
        offsets = np.array([0, 1])
        cx = sx[:, None] + offsets[None, :]
        cy = sy[:, None] + offsets[None, :]
    elif mode is RoundingMode.LOCAL3X3:
        offsets = np.array([-1, 0, 1])
        cx = np.clip(jx[:, None] + offsets[None, :], 0, k - 1)
        cy = np.clip(jy[:, None] + offsets[None, :], 0, k - 1)
    else:
        raise ValueError(f"不支持的局部舍入模式: {mode}")
    return (cx[:, :, None] * k + cy[:, None, :]).reshape(jx.size, -1)


def round_triplets(t: np.ndarray, books: CodecBooks, mode: RoundingMode):
    """(m, 3) 三元组 → (iξ, iη, iρ, s*) 各为 (m,)"""
    t = np.asarray(t, dtype=np.float64).reshape(-1, 3)
    mode = RoundingMode(mode)
    k = books.xi.size
    table = books.directions
    if mode is RoundingMode.FULL:
        flat = np.empty(t.shape[0], dtype=np.int64)
        s_star = np.empty(t.shape[0])
        for start in range(0, t.shape[0], FULL_SEARCH_CHUNK):
            s = t[start:start + FULL_SEARCH_CHUNK] @ table.T
            best = np.argmax(s, axis=1)
            flat[start:start + FULL_SEARCH_CHUNK] = best
            s_star[start:start + FULL_SEARCH_CHUNK] = s[np.arange(best.size), best]
    else:
        norms = np.linalg.norm(t, axis=1, keepdims=True)
        c = oct_encode_array(t / np.maximum(norms, EPS))
        jx = np.asarray(quantize_index(books.xi, c[:, 0]), dtype=np.int64).reshape(-1)
        jy = np.asarray(quantize_index(books.xi, c[:, 1]), dtype=np.int64).reshape(-1)
        cand = _candidates(jx, jy, k, mode)
        s = np.einsum("mck,mk->mc", table[cand], t)
        best = np.argmax(s, axis=1)
        rows = np.arange(t.shape[0])
        flat = cand[rows, best]
        s_star = s[rows, best]
    i_rho = np.asarray(quantize_index(books.rho, np.clip(s_star, 0.0, 1.0)), dtype=np.int64).reshape(-1)
    return flat // k, flat % k, i_rho, s_star


def joint_round_triplet(t, books: CodecBooks, mode: RoundingMode = RoundingMode.LOCAL3X3):
    """单个三元组的联合舍入，返回 (iξ, iη, iρ, s*)"""
    ix, iy, ir, s = round_triplets(np.asarray(t, dtype=np.float64).reshape(1, 3), books, mode)
    return int(ix[0]), int(iy[0]), int(ir[0]), float(s[0])


def triplet_loss(t, books: CodecBooks, i_xi, i_eta, i_rho) -> np.ndarray:
    """‖t - ρ̂·n̂(ξ̂, η̂)‖²，可按行批量"""
    t = np.asarray(t, dtype=np.float64).reshape(-1, 3)
    k = books.xi.size
    n_hat = books.directions[np.asarray(i_xi) * k + np.asarray(i_eta)].reshape(-1, 3)
    rho = books.rho.centroids[np.asarray(i_rho)].reshape(-1, 1)
    return np.sum((t - rho * n_hat) ** 2, axis=1)


# ---------------------------------------------------------------- 编码 / 解码

def _as_matrix(x: np.ndarray, dim: int, what: str) -> np.ndarray:
    m = np.asarray(x, dtype=np.float64)
    if m.ndim == 1:
        m = m[None, :]
    if m.ndim != 2 or m.shape[1] != dim:
        raise ValueError(f"{what} 形状 {np.shape(x)} 与维度 {dim} 不匹配")
    return m


def _to_triplets(u: np.ndarray, cfg: CodecConfig) -> np.ndarray:
    padded = np.zeros((u.shape[0], cfg.padded_dim))
    padded[:, :cfg.dim] = u
    return padded.reshape(u.shape[0], cfg.n_tri, 3)


def encode_keys(cfg: CodecConfig, books: CodecBooks, keys: np.ndarray) -> CompressedCache:
    """按行批量编码 (n, dim) 键矩阵"""
    books.check(cfg)
    k = _as_matrix(keys, cfg.dim, "键")
    if not np.all(np.isfinite(k)):
        raise ValueError("键包含非有限值")
    gamma = np.linalg.norm(k, axis=1)
    u = rotate(_rotation(cfg.dim, cfg.rotation_seed), k / np.maximum(gamma, EPS)[:, None])
    triplets = _to_triplets(u, cfg)
    ix, iy, ir, _ = round_triplets(triplets.reshape(-1, 3), books, cfg.rounding)
    n = k.shape[0]
    dir_idx = np.stack([ix, iy], axis=-1).reshape(n, 2 * cfg.n_tri)
    nrm_idx = ir.reshape(n, cfg.n_tri)
    logger.debug("编码 %d 个键 (d=%d, split=(%d, %d), %s)", n, cfg.dim, cfg.b_dir, cfg.b_nrm, cfg.rounding.value)
    cache = CompressedCache(gamma.astype(np.float32), dir_idx, nrm_idx)
    if cfg.qjl:
        u_hat = _rotated_reconstruction(cfg, books, cache)
        cache.gamma_r, cache.signs = qjl_sketch(_rotation(cfg.dim, cfg.qjl_seed), u - u_hat)
    return cache


def encode_key(cfg: CodecConfig, books: CodecBooks, key: np.ndarray) -> CompressedKey:
    k = np.asarray(key, dtype=np.float64)
    if k.ndim != 1:
        raise ValueError(f"单个键必须是一维向量: {k.shape}")
    return encode_keys(cfg, books, k)[0]


def _as_cache(cache: KeysLike) -> CompressedCache:
    if isinstance(cache, CompressedCache):
        return cache
    if isinstance(cache, CompressedKey):
        return CompressedCache.from_keys([cache])
    return CompressedCache.from_keys(list(cache))


def _check_cache(cfg: CodecConfig, books: CodecBooks, cache: CompressedCache):
    books.check(cfg)
    if cache.dir_indices.shape[1] != 2 * cfg.n_tri or cache.nrm_indices.shape[1] != cfg.n_tri:
        raise FormatError("压缩状态的流长度与配置不符")
    if np.any(cache.dir_indices < 0) or np.any(cache.dir_indices >= books.xi.size):
        raise FormatError("方向索引越界")
    if np.any(cache.nrm_indices < 0) or np.any(cache.nrm_indices >= books.rho.size):
        raise FormatError("范数索引越界")


def _rotated_reconstruction(cfg: CodecConfig, books: CodecBooks, cache: CompressedCache) -> np.ndarray:
    """旋转域单位向量重建 û，形状 (n, dim)，已去掉补零坐标"""
    n = len(cache)
    k = books.xi.size
    pairs = cache.dir_indices.reshape(n, cfg.n_tri, 2)
    n_hat = books.directions[pairs[..., 0] * k + pairs[..., 1]]
    rho = books.rho.centroids[cache.nrm_indices]
    return (rho[..., None] * n_hat).reshape(n, cfg.padded_dim)[:, :cfg.dim]


def decode_keys(cfg: CodecConfig, books: CodecBooks, cache: KeysLike) -> np.ndarray:
    """k̂ = γ · Rᵀ û；QJL 附加信息不参与重建"""
    cache = _as_cache(cache)
    _check_cache(cfg, books, cache)
    u_hat = _rotated_reconstruction(cfg, books, cache)
    unit = rotate_inverse(_rotation(cfg.dim, cfg.rotation_seed), u_hat)
    return cache.gamma.astype(np.float64)[:, None] * unit


def decode_key(cfg: CodecConfig, books: CodecBooks, ck: CompressedKey) -> np.ndarray:
    return decode_keys(cfg, books, [ck])[0]


# ---------------------------------------------------------------- 打分

def score_matrix(cfg: CodecConfig, books: CodecBooks, queries: np.ndarray, cache: KeysLike,
                 rotated: bool = False) -> np.ndarray:
    """(n_q, dim) 查询对 n 个压缩键的内积估计，形状 (n_q, n)"""
    cache = _as_cache(cache)
    _check_cache(cfg, books, cache)
    q = _as_matrix(queries, cfg.dim, "查询")
    if not np.all(np.isfinite(q)):
        raise ValueError("查询包含非有限值")
    q_rot = q if rotated else rotate(_rotation(cfg.dim, cfg.rotation_seed), q)
    n = len(cache)
    k = books.xi.size
    q_tri = _to_triplets(q_rot, cfg)
    pairs = cache.dir_indices.reshape(n, cfg.n_tri, 2)
    n_hat = books.directions[pairs[..., 0] * k + pairs[..., 1]]
    rho = books.rho.centroids[cache.nrm_indices]
    # 补零坐标处查询为 0，不影响求和
    per_key = np.einsum("qtc,ntc,nt->qn", q_tri, n_hat, rho, optimize=True)
    gamma = cache.gamma.astype(np.float64)[None, :]
    scores = gamma * per_key
    if cfg.qjl:
        if not cache.has_qjl:
            raise FormatError("配置要求 QJL，但压缩状态缺少残差草图")
        scores = scores + gamma * qjl_correction(_rotation(cfg.dim, cfg.qjl_seed), q_rot,
                                                 cache.gamma_r, cache.signs)
    return scores


def score(cfg: CodecConfig, books: CodecBooks, q: np.ndarray, ck: CompressedKey, rotated: bool = False) -> float:
    """单个查询与单个压缩键的内积估计"""
    q = np.asarray(q, dtype=np.float64)
    if q.ndim != 1:
        raise ValueError(f"查询必须是一维向量: {q.shape}")
    return float(score_matrix(cfg, books, q, [ck], rotated)[0, 0])


# ---------------------------------------------------------------- 注意力解码

def _online_softmax(logits: np.ndarray, values: np.ndarray, block: int):
    """单遍在线 softmax，返回部分结果 (m, ℓ, acc)"""
    m = -np.inf
    ell = 0.0
    acc = np.zeros(values.shape[1])
    for start in range(0, logits.size, block):
        s = logits[start:start + block]
        m_new = max(m, float(np.max(s)))
        alpha = np.exp(m - m_new) if np.isfinite(m) else 0.0
        p = np.exp(s - m_new)
        ell = ell * alpha + float(np.sum(p))
        acc = acc * alpha + p @ values[start:start + block]
        m = m_new
    return m, ell, acc


def merge_partials(partials: Iterable[Tuple[float, float, np.ndarray]]) -> np.ndarray:
    """flash-decoding 合并：m* = max mⱼ，ℓ = Σ ℓⱼ e^(mⱼ-m*)，acc 同理"""
    partials = list(partials)
    m_star = max(p[0] for p in partials)
    ell = sum(p[1] * np.exp(p[0] - m_star) for p in partials)
    acc = sum(p[2] * np.exp(p[0] - m_star) for p in partials)
    return acc / ell


def attention_decode(cfg: CodecConfig, books: CodecBooks, q: np.ndarray, cache: KeysLike,
                     values: np.ndarray, n_splits: int = 1, block: int = 64) -> np.ndarray:
    """softmax(score/√d)·V，缓存切成 n_splits 段分别做在线 softmax 后合并"""
    if isinstance(cache, (list, tuple)) and not cache:
        raise ValueError("键缓存为空")
    cache = _as_cache(cache)
    if len(cache) == 0:
        raise ValueError("键缓存为空")
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 2 or v.shape[0] != len(cache):
        raise ValueError(f"值矩阵行数 {v.shape[0] if v.ndim == 2 else v.shape} 与缓存长度 {len(cache)} 不符")
    if n_splits < 1 or block < 1:
        raise ValueError("分段数与块大小必须为正")
    logits = score_matrix(cfg, books, np.asarray(q, dtype=np.float64).reshape(1, -1), cache)[0] / np.sqrt(cfg.dim)
    chunks = [c for c in np.array_split(np.arange(len(cache)), n_splits) if c.size]
    partials = [_online_softmax(logits[c], v[c], block) for c in chunks]
    return merge_partials(partials)


# ---------------------------------------------------------------- 打包

def key_payload_size(cfg: CodecConfig) -> int:
    """单个键的字节数（不含文件头）"""
    size = 4 + packed_size(2 * cfg.n_tri, cfg.b_dir) + packed_size(cfg.n_tri, cfg.b_nrm)
    if cfg.qjl:
        size += 2 + packed_size(cfg.dim, 1)
    return size


def _column_layout(cfg: CodecConfig):
    dir_bytes = packed_size(2 * cfg.n_tri, cfg.b_dir)
    nrm_bytes = packed_size(cfg.n_tri, cfg.b_nrm)
    offsets = {'gamma': (0, 4), 'dir': (4, 4 + dir_bytes)}
    offsets['nrm'] = (offsets['dir'][1], offsets['dir'][1] + nrm_bytes)
    if cfg.qjl:
        end = offsets['nrm'][1]
        offsets['gamma_r'] = (end, end + 2)
        offsets['signs'] = (end + 2, end + 2 + packed_size(cfg.dim, 1))
    return offsets


def pack(cfg: CodecConfig, cache: KeysLike) -> bytes:
    """压缩状态 → 字节串（文件头 + 逐键定长记录）"""
    cache = _as_cache(cache)
    if cache.dir_indices.shape[1] != 2 * cfg.n_tri or cache.nrm_indices.shape[1] != cfg.n_tri:
        raise FormatError("压缩状态的流长度与配置不符")
    if cfg.qjl != cache.has_qjl:
        raise FormatError("QJL 标志与压缩状态不一致")
    n = len(cache)
    layout = _column_layout(cfg)
    body = np.zeros((n, key_payload_size(cfg)), dtype=np.uint8)

    def put(name, cols):
        lo, hi = layout[name]
        body[:, lo:hi] = cols

    put('gamma', cache.gamma.astype("<f4").view(np.uint8).reshape(n, 4))
    put('dir', pack_index_rows(cache.dir_indices, cfg.b_dir))
    put('nrm', pack_index_rows(cache.nrm_indices, cfg.b_nrm))
    if cfg.qjl:
        put('gamma_r', cache.gamma_r.astype("<f2").view(np.uint8).reshape(n, 2))
        put('signs', pack_sign_rows(cache.signs))
    flags = FLAG_QJL if cfg.qjl else 0
    head = _BLOB_HEADER.pack(BLOB_MAGIC, BLOB_VERSION, flags, cfg.b_dir, cfg.b_nrm, cfg.dim, n)
    return head + body.tobytes()


def unpack(cfg: CodecConfig, blob: bytes) -> CompressedCache:
    """字节串 → 压缩状态；文件头须与配置一致"""
    if len(blob) < _BLOB_HEADER.size:
        raise FormatError(f"数据过短: {len(blob)} 字节")
    magic, version, flags, b_dir, b_nrm, dim, count = _BLOB_HEADER.unpack_from(blob, 0)
    if magic != BLOB_MAGIC:
        raise FormatError(f"魔数错误: {magic!r}")
    if version != BLOB_VERSION:
        raise FormatError(f"不支持的版本: {version}")
    if flags & ~FLAG_QJL:
        raise FormatError(f"未知标志位: {flags:#x}")
    if (b_dir, b_nrm, dim, bool(flags & FLAG_QJL)) != (cfg.b_dir, cfg.b_nrm, cfg.dim, cfg.qjl):
        raise FormatError(f"文件头 (b_dir={b_dir}, b_nrm={b_nrm}, dim={dim}, flags={flags}) 与配置不符")
    payload = key_payload_size(cfg)
    expected = _BLOB_HEADER.size + count * payload
    if len(blob) != expected:
        raise FormatError(f"数据长度 {len(blob)} 与预期 {expected} 不符")
    body = np.frombuffer(blob, dtype=np.uint8, offset=_BLOB_HEADER.size).reshape(count, payload)
    layout = _column_layout(cfg)

    def take(name):
        lo, hi = layout[name]
        return np.ascontiguousarray(body[:, lo:hi])

    gamma = take('gamma').view("<f4").reshape(count)
    if np.any(np.signbit(gamma)) or not np.all(np.isfinite(gamma)):
        raise FormatError("γ 必须是非负有限数")
    dir_idx = unpack_index_rows(take('dir'), 2 * cfg.n_tri, cfg.b_dir)
    nrm_idx = unpack_index_rows(take('nrm'), cfg.n_tri, cfg.b_nrm)
    gamma_r = signs = None
    if cfg.qjl:
        gamma_r = take('gamma_r').view("<f2").reshape(count)
        if np.any(np.signbit(gamma_r)) or not np.all(np.isfinite(gamma_r)):
            raise FormatError("γ_r 必须是非负有限数")
        signs = unpack_sign_rows(take('signs'), cfg.dim)
    return CompressedCache(gamma.astype(np.float32), dir_idx, nrm_idx, gamma_r, signs)


def pack_key(cfg: CodecConfig, ck: CompressedKey) -> bytes:
    return pack(cfg, [ck])


def unpack_key(cfg: CodecConfig, blob: bytes) -> CompressedKey:
    cache = unpack(cfg, blob)
    if len(cache) != 1:
        raise FormatError(f"期望 1 个键，实际 {len(cache)} 个")
    return cache[0]

