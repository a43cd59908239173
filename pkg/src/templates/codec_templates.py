"""
Codec template library.

Declarative descriptions of every key codec the benchmarks compare, plus
a builder that turns a template key into a ready-to-use ``KeyCodec``
backed by codebooks from a ``CodebookStore``. All codecs share the same
rotation seed for a given experiment seed, so the only thing that varies
across rows is the key codec itself.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, List, Tuple

import numpy as np

from ..core import baselines, codec
from ..core.codebook_store import CodebookStore
from ..models.codec_model import BaselineConfig, BaselineKind, CodecConfig, RoundingMode


class KeyCodec(ABC):
    """Common surface used by the metric suite and experiment drivers."""

    key: str = ""
    bits: int = 0

    @abstractmethod
    def encode(self, keys: np.ndarray) -> Any:
        """Compress an (n, d) key matrix into an opaque state."""

    @abstractmethod
    def decode(self, state: Any) -> np.ndarray:
        """Reconstruct the (n, d) key matrix."""

    @abstractmethod
    def score(self, queries: np.ndarray, state: Any) -> np.ndarray:
        """(n_q, n) inner-product estimates using the codec's own estimator."""

    @abstractmethod
    def bits_per_coord(self) -> float:
        """Key-side storage rate."""


class IdentityCodec(KeyCodec):
    """Uncompressed fp32 keys."""

    key = "fp32"
    bits = 32

    def __init__(self, dim: int):
        self.dim = dim

    def encode(self, keys):
        return np.array(keys, dtype=np.float64).reshape(-1, self.dim)

    def decode(self, state):
        return np.asarray(state, dtype=np.float64)

    def score(self, queries, state):
        return np.atleast_2d(np.asarray(queries, dtype=np.float64)) @ self.decode(state).T

    def bits_per_coord(self) -> float:
        return 32.0


class OctopusCodec(KeyCodec):
    def __init__(self, key: str, bits: int, cfg: CodecConfig, books: codec.CodecBooks):
        self.key = key
        self.bits = bits
        self.cfg = cfg
        self.books = books

    def encode(self, keys):
        return codec.encode_keys(self.cfg, self.books, keys)

    def decode(self, state):
        return codec.decode_keys(self.cfg, self.books, state)

    def score(self, queries, state):
        return codec.score_matrix(self.cfg, self.books, queries, state)

    def bits_per_coord(self) -> float:
        return codec.effective_bits_per_coord(self.cfg)


class BaselineCodec(KeyCodec):
    def __init__(self, key: str, bits: int, cfg: BaselineConfig, books):
        self.key = key
        self.bits = bits
        self.cfg = cfg
        self.books = books

    def encode(self, keys):
        return baselines.baseline_encode(self.cfg, self.books, keys)

    def decode(self, state):
        return baselines.baseline_decode(self.cfg, self.books, state)

    def score(self, queries, state):
        return baselines.baseline_score(self.cfg, self.books, queries, state)

    def bits_per_coord(self) -> float:
        return baselines.baseline_bits_per_coord(self.cfg)


@dataclass(frozen=True)
class CodecTemplate:
    """Structured metadata for one comparable key codec."""

    key: str
    name: str
    family: str
    description: str
    uses_qjl: bool = False
    min_bits: int = 1


CODEC_TEMPLATE_LIBRARY: Dict[str, CodecTemplate] = {}


def _register_template(template: CodecTemplate) -> None:
    CODEC_TEMPLATE_LIBRARY[template.key] = template


def initialise_codec_templates() -> None:
    if CODEC_TEMPLATE_LIBRARY:
        return
    _register_template(CodecTemplate(
        key="fp32", name="fp32", family="identity",
        description="Uncompressed keys; reference for metrics and needle mass.",
    ))
    _register_template(CodecTemplate(
        key="tq_mse", name="TurboQuant-MSE", family="per-coordinate",
        description="Per-coordinate Lloyd-Max on the rotated-coordinate marginal.",
    ))
    _register_template(CodecTemplate(
        key="tq_qjl", name="TurboQuant-QJL", family="per-coordinate",
        description="TurboQuant-MSE at b-1 bits plus a one-bit residual sketch; scored from the stage-one reconstruction.",
        uses_qjl=True, min_bits=2,
    ))
    _register_template(CodecTemplate(
        key="polar", name="PolarQuant", family="recursive-polar",
        description="Recursive polar angles with level-wise Lloyd-Max books.",
    ))
    _register_template(CodecTemplate(
        key="octopus", name="OCTOPUS", family="triplet",
        description="Octahedral triplet quantizer with a (b+1, b-1) bit split.",
    ))
    _register_template(CodecTemplate(
        key="octopus_qjl", name="OCTOPUS-QJL", family="triplet",
        description="OCTOPUS plus the one-bit residual sketch on the score path.",
        uses_qjl=True,
    ))


def list_codec_templates() -> Dict[str, CodecTemplate]:
    initialise_codec_templates()
    return dict(CODEC_TEMPLATE_LIBRARY)


def get_codec_template(key: str) -> CodecTemplate:
    initialise_codec_templates()
    try:
        return CODEC_TEMPLATE_LIBRARY[key]
    except KeyError:
        known = ", ".join(sorted(CODEC_TEMPLATE_LIBRARY))
        raise ValueError(f"未知的编解码器: {key}（可选: {known}）") from None


def octopus_split(bits: int) -> Tuple[int, int]:
    """Nominal b bits → (b_dir, b_nrm); one bit has only the uniform split."""
    return (1, 1) if bits == 1 else codec.default_bit_split(bits)


def octopus_config(dim: int, bits: int, seed: int, rounding: RoundingMode = RoundingMode.LOCAL3X3,
                   qjl: bool = False, split=None) -> CodecConfig:
    b_dir, b_nrm = split or octopus_split(bits)
    return CodecConfig.for_seed(dim, b_dir, b_nrm, seed, RoundingMode(rounding), qjl)


def build_codec(key: str, dim: int, bits: int, seed: int, store: CodebookStore,
                rounding: RoundingMode = RoundingMode.LOCAL3X3, split=None) -> KeyCodec:
    """Instantiate the codec named by ``key`` for one experiment seed."""
    template = get_codec_template(key)
    if bits < template.min_bits:
        raise ValueError(f"{template.name} 至少需要 {template.min_bits} 位: {bits}")
    if template.key == "fp32":
        return IdentityCodec(dim)
    if template.family == "triplet":
        cfg = octopus_config(dim, bits, seed, rounding, template.uses_qjl, split)
        return OctopusCodec(template.key, bits, cfg, store.books_for(cfg))
    kind = {"tq_mse": BaselineKind.TQ_MSE, "tq_qjl": BaselineKind.TQ_QJL, "polar": BaselineKind.POLAR}[key]
    cfg = BaselineConfig.for_seed(kind, dim, bits, seed)
    return BaselineCodec(template.key, bits, cfg, store.baseline_books(cfg))


def warm_codebooks(keys: List[str], dim: int, bits: List[int], store: CodebookStore) -> None:
    """Train every codebook the given codec × bits grid needs, up front."""
    for key in keys:
        for b in bits:
            if b >= get_codec_template(key).min_bits:
                build_codec(key, dim, b, 0, store)

