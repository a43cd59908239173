# -*- coding: utf-8 -*-
"""
码本管理器
Codebook Store

负责码本的训练、缓存、保存与加载。目录布局：
    <dir>/xi_b{B}.ocbk            八面体坐标码本（与维度无关）
    <dir>/rho_d{D}_b{B}.ocbk      三元组范数码本
    <dir>/coord_d{D}_b{B}.ocbk    逐坐标基线码本
    <dir>/polar_d{D}_b{B}_l{L}.ocbk  极坐标各层角度码本（L=1 为叶子）
内存中的码本统一舍入到 f32，与磁盘上的一致。
"""

from __future__ import annotations

import logging
import os
import re
import threading
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..models.codebook_model import Codebook, CodebookKind, deserialize_codebook, serialize_codebook
from ..models.codec_model import BaselineConfig, BaselineKind, CodecConfig
from .baselines import PolarBooks, train_coord_book, train_polar_books
from .codec import CodecBooks
from .lloydmax import TrainingOptions, train_from_density, train_from_samples
from .marginals import DensitySpec, SampleStream, sample_triplet_norms, sample_unit_sphere
from .octahedral import oct_encode_array

logger = logging.getLogger(__name__)

XI_SEED = 0xC0DEB00C
XI_TRAIN_SAMPLES = 1 << 22
_XI_CHUNK = 1 << 20
RHO_SMALL_SEED = 0x4E0D
RHO_SMALL_SAMPLES = 1 << 18

_NAME_PATTERNS = {
    'xi': re.compile(r"^xi_b(\d+)\.ocbk$"),
    'rho': re.compile(r"^rho_d(\d+)_b(\d+)\.ocbk$"),
    'coord': re.compile(r"^coord_d(\d+)_b(\d+)\.ocbk$"),
    'polar': re.compile(r"^polar_d(\d+)_b(\d+)_l(\d+)\.ocbk$"),
}


@lru_cache(maxsize=2)
def oct_training_samples(n_samples: int = XI_TRAIN_SAMPLES, seed: int = XI_SEED) -> np.ndarray:
    """n 个均匀 S² 样本折叠后的 ξ 与 η，合并为一个数组"""
    stream = SampleStream(seed)
    parts = []
    for i, start in enumerate(range(0, n_samples, _XI_CHUNK)):
        count = min(_XI_CHUNK, n_samples - start)
        parts.append(oct_encode_array(sample_unit_sphere(3, stream.child(i), count)).reshape(-1))
    out = np.concatenate(parts)
    out.setflags(write=False)
    return out


def train_xi_codebook(bits: int, opts: Optional[TrainingOptions] = None,
                      n_samples: int = XI_TRAIN_SAMPLES, seed: int = XI_SEED) -> Codebook:
    """C_ξ：在经验八面体样本上训练（ξ、η 共用一本码本）"""
    return train_from_samples(oct_training_samples(n_samples, seed), bits, opts,
                              CodebookKind.OCT_COORD, 0, (-1.0, 1.0))


def train_xi_codebook_from_density(bits: int, opts: Optional[TrainingOptions] = None) -> Codebook:
    return train_from_density(DensitySpec.oct_coordinate(), bits, opts)


def train_rho_codebook(dim: int, bits: int, opts: Optional[TrainingOptions] = None) -> Codebook:
    """C_ρ：d ≥ 5 用解析密度；d = 4 时密度在 r=1 处无界，改用球面样本"""
    if dim == 4:
        samples = sample_triplet_norms(dim, SampleStream(RHO_SMALL_SEED, dim), RHO_SMALL_SAMPLES)
        return train_from_samples(samples, bits, opts, CodebookKind.TRIPLET_NORM, dim, (0.0, 1.0))
    return train_from_density(DensitySpec.triplet_norm(dim), bits, opts)


class CodebookStore:
    """码本管理器：按需训练并缓存，可保存到目录或从目录加载"""

    def __init__(self, directory: Optional[str] = None, opts: Optional[TrainingOptions] = None,
                 xi_samples: int = XI_TRAIN_SAMPLES):
        self.directory = directory
        self.opts = opts or TrainingOptions()
        self.xi_samples = xi_samples
        self._books: Dict[Tuple, Codebook] = {}
        self._lock = threading.RLock()
        self.is_modified = False

    # ------------------------------------------------------------ 获取

    def _get(self, key: Tuple, filename: str, train) -> Codebook:
        with self._lock:
            book = self._books.get(key)
            if book is not None:
                return book
            path = os.path.join(self.directory, filename) if self.directory else None
            if path and os.path.exists(path):
                book = self.load_file(path)
                logger.info("从 %s 加载码本", path)
            else:
                book = train().to_storage_precision()
                self.is_modified = True
            self._books[key] = book
            return book

    def get_xi(self, bits: int) -> Codebook:
        return self._get(('xi', bits), f"xi_b{bits}.ocbk",
                         lambda: train_xi_codebook(bits, self.opts, self.xi_samples))

    def get_rho(self, dim: int, bits: int) -> Codebook:
        return self._get(('rho', dim, bits), f"rho_d{dim}_b{bits}.ocbk",
                         lambda: train_rho_codebook(dim, bits, self.opts))

    def get_coord(self, dim: int, bits: int) -> Codebook:
        return self._get(('coord', dim, bits), f"coord_d{dim}_b{bits}.ocbk",
                         lambda: train_coord_book(dim, bits, self.opts))

    def get_polar(self, dim: int, bits: int) -> PolarBooks:
        levels = dim.bit_length() - 1
        with self._lock:
            missing = [lv for lv in range(1, levels + 1) if ('polar', dim, bits, lv) not in self._books]
            if missing:
                trained: Optional[PolarBooks] = None
                for lv in missing:
                    name = f"polar_d{dim}_b{bits}_l{lv}.ocbk"
                    path = os.path.join(self.directory, name) if self.directory else None
                    if path and os.path.exists(path):
                        self._books[('polar', dim, bits, lv)] = self.load_file(path)
                        continue
                    if trained is None:
                        trained = train_polar_books(dim, bits, self.opts)
                        self.is_modified = True
                    book = trained.leaf if lv == 1 else trained.levels[lv - 2]
                    self._books[('polar', dim, bits, lv)] = book.to_storage_precision()
            leaf = self._books[('polar', dim, bits, 1)]
            inner = tuple(self._books[('polar', dim, bits, lv)] for lv in range(2, levels + 1))
            return PolarBooks(leaf, inner)

    def books_for(self, cfg: CodecConfig) -> CodecBooks:
        """OCTOPUS 配置所需的 (C_ξ, C_ρ)"""
        return CodecBooks(self.get_xi(cfg.b_dir), self.get_rho(cfg.dim, cfg.b_nrm))

    def baseline_books(self, cfg: BaselineConfig):
        if cfg.kind is BaselineKind.POLAR:
            return self.get_polar(cfg.dim, cfg.bits)
        return self.get_coord(cfg.dim, cfg.stage_bits)

    # ------------------------------------------------------------ 持久化

    @staticmethod
    def filename_for(key: Tuple) -> str:
        if key[0] == 'xi':
            return f"xi_b{key[1]}.ocbk"
        if key[0] == 'polar':
            return f"polar_d{key[1]}_b{key[2]}_l{key[3]}.ocbk"
        return f"{key[0]}_d{key[1]}_b{key[2]}.ocbk"

    def save(self, directory: Optional[str] = None) -> List[str]:
        """保存所有持有的码本，返回写入的文件路径"""
        directory = directory or self.directory
        if not directory:
            raise ValueError("没有指定码本保存目录")
        os.makedirs(directory, exist_ok=True)
        written = []
        with self._lock:
            for key in sorted(self._books, key=str):
                path = os.path.join(directory, self.filename_for(key))
                with open(path, 'wb') as f:
                    f.write(serialize_codebook(self._books[key]))
                written.append(path)
            self.is_modified = False
        logger.info("已保存 %d 个码本到 %s", len(written), directory)
        return written

    @staticmethod
    def load_file(path: str) -> Codebook:
        if not os.path.exists(path):
            raise FileNotFoundError(f"码本文件不存在: {path}")
        with open(path, 'rb') as f:
            return deserialize_codebook(f.read())

    def load(self, directory: Optional[str] = None) -> int:
        """加载目录中所有可识别的码本文件，返回加载个数"""
        directory = directory or self.directory
        if not directory or not os.path.isdir(directory):
            raise FileNotFoundError(f"码本目录不存在: {directory}")
        count = 0
        with self._lock:
            for name in sorted(os.listdir(directory)):
                for tag, pattern in _NAME_PATTERNS.items():
                    match = pattern.match(name)
                    if match:
                        key = (tag,) + tuple(int(g) for g in match.groups())
                        self._books[key] = self.load_file(os.path.join(directory, name))
                        count += 1
                        break
        return count

    def has_unsaved_changes(self) -> bool:
        """检查是否有尚未保存的新训练码本"""
        return self.is_modified

    def __len__(self) -> int:
        return len(self._books)
