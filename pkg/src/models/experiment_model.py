# -*- coding: utf-8 -*-
"""
实验数据模型
Experiment Model

合成探针、针检索、位分配扫描与舍入消融的配置和结果行。
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from enum import Enum
from typing import Any, ClassVar, Dict, List, Optional, Tuple

from .base_model import BaseModel
from .codec_model import RoundingMode

DEFAULT_CODECS = ("tq_mse", "tq_qjl", "polar", "octopus", "octopus_qjl")
NEEDLE_NORMS = ("fixed", "gaussian")


def _tuple(value, cast=str) -> Tuple:
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    return tuple(cast(v.strip()) if isinstance(v, str) else cast(v) for v in value)


@dataclass(frozen=True)
class SyntheticProbeConfig:
    """高斯键/查询合成探针"""

    dim: int = 128
    n_keys: int = 1024
    n_queries: int = 16
    n_seeds: int = 64
    codecs: Tuple[str, ...] = DEFAULT_CODECS
    bits: Tuple[int, ...] = (2, 3, 4)
    rounding: RoundingMode = RoundingMode.SCALAR
    base_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "codecs", _tuple(self.codecs))
        object.__setattr__(self, "bits", _tuple(self.bits, int))
        object.__setattr__(self, "rounding", RoundingMode(self.rounding))
        for name in ("dim", "n_keys", "n_queries", "n_seeds", "workers"):
            if int(getattr(self, name)) <= 0:
                raise ValueError(f"{name} 必须为正: {getattr(self, name)}")
        if not self.codecs or not self.bits:
            raise ValueError("编解码器列表与位宽列表不能为空")

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['rounding'] = self.rounding.value
        data['codecs'] = list(self.codecs)
        data['bits'] = list(self.bits)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SyntheticProbeConfig":
        return cls(**_known(cls, data))


@dataclass(frozen=True)
class NeedleConfig:
    """针检索：一个目标键藏在 T 个高斯干扰键中"""

    dim: int = 128
    distractors: int = 2048
    noise_fraction: float = 0.10
    needle_norm: str = "fixed"
    n_seeds: int = 128
    codecs: Tuple[str, ...] = ("fp32", "octopus", "octopus_qjl", "tq_mse", "tq_qjl", "polar")
    bits: Tuple[int, ...] = (2,)
    rounding: RoundingMode = RoundingMode.SCALAR
    base_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "codecs", _tuple(self.codecs))
        object.__setattr__(self, "bits", _tuple(self.bits, int))
        object.__setattr__(self, "rounding", RoundingMode(self.rounding))
        if not 0.0 <= self.noise_fraction < 1.0:
            raise ValueError(f"噪声比例必须在 [0, 1) 内: {self.noise_fraction}")
        if self.needle_norm not in NEEDLE_NORMS:
            raise ValueError(f"未知的目标键范数方式: {self.needle_norm}（可选: {', '.join(NEEDLE_NORMS)}）")
        for name in ("dim", "distractors", "n_seeds", "workers"):
            if int(getattr(self, name)) <= 0:
                raise ValueError(f"{name} 必须为正: {getattr(self, name)}")

    @property
    def softmax_scale(self) -> float:
        return self.dim ** -0.5

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['rounding'] = self.rounding.value
        data['codecs'] = list(self.codecs)
        data['bits'] = list(self.bits)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NeedleConfig":
        return cls(**_known(cls, data))


@dataclass(frozen=True)
class SweepConfig:
    """对角位分配扫描 (b+δ, b-δ)"""

    dim: int = 128
    n_keys: int = 8192
    n_seeds: int = 4
    bits: Tuple[int, ...] = (2, 3, 4)
    deltas: Tuple[int, ...] = (-2, -1, 0, 1, 2)
    rounding: RoundingMode = RoundingMode.LOCAL3X3
    base_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "bits", _tuple(self.bits, int))
        object.__setattr__(self, "deltas", _tuple(self.deltas, int))
        object.__setattr__(self, "rounding", RoundingMode(self.rounding))
        if 0 not in self.deltas:
            raise ValueError("扫描必须包含 δ=0 的均匀参考")
        for name in ("dim", "n_keys", "n_seeds"):
            if int(getattr(self, name)) <= 0:
                raise ValueError(f"{name} 必须为正: {getattr(self, name)}")

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data.update(rounding=self.rounding.value, bits=list(self.bits), deltas=list(self.deltas))
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SweepConfig":
        return cls(**_known(cls, data))


@dataclass(frozen=True)
class AblationConfig:
    """舍入模式消融"""

    dim: int = 128
    n_keys: int = 4096
    n_queries: int = 64
    n_seeds: int = 5
    bits: Tuple[int, ...] = (1, 2, 3, 4)
    modes: Tuple[RoundingMode, ...] = tuple(RoundingMode)
    base_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "bits", _tuple(self.bits, int))
        object.__setattr__(self, "modes", _tuple(self.modes, RoundingMode))
        if RoundingMode.SCALAR not in self.modes:
            raise ValueError("消融必须包含 scalar 参考模式")
        for name in ("dim", "n_keys", "n_queries", "n_seeds"):
            if int(getattr(self, name)) <= 0:
                raise ValueError(f"{name} 必须为正: {getattr(self, name)}")

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data.update(bits=list(self.bits), modes=[m.value for m in self.modes])
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "AblationConfig":
        return cls(**_known(cls, data))


def _is_scalar(value) -> bool:
    return isinstance(value, (str, int, float, Enum)) and not isinstance(value, bool)


def _check_type(cls, name: str, default, value):
    """配置值的类型必须与默认值同类，否则报 ValueError 而不是让构造函数抛 TypeError"""
    if isinstance(default, tuple):
        ok = isinstance(value, str) or (isinstance(value, (list, tuple)) and all(_is_scalar(v) for v in value))
    elif isinstance(default, Enum):
        ok = isinstance(value, (str, type(default)))
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    else:
        ok = isinstance(value, type(default))
    if not ok:
        raise ValueError(f"{cls.__name__}.{name} 的类型不对: {value!r}")


def _known(cls, data: Dict[str, Any]) -> Dict[str, Any]:
    defaults = {f.name: f.default for f in fields(cls)}
    unknown = sorted(set(data) - set(defaults))
    if unknown:
        raise ValueError(f"{cls.__name__} 不认识的配置项: {', '.join(unknown)}")
    for name, value in data.items():
        _check_type(cls, name, defaults[name], value)
    return dict(data)


@dataclass
class MetricRow:
    """一个 (编解码器, 位宽) 单元的种子统计"""

    COLUMNS: ClassVar[Tuple[str, ...]] = (
        "codec", "bits", "bits_per_coord", "n_seeds",
        "cosine", "cosine_se", "mse", "mse_se", "ip_err", "ip_err_se",
        "softmax_mass", "softmax_mass_se",
    )

    codec: str
    bits: int
    n_seeds: int = 1
    cosine: Optional[float] = None
    mse: Optional[float] = None
    ip_err: Optional[float] = None
    softmax_mass: Optional[float] = None
    cosine_se: Optional[float] = None
    mse_se: Optional[float] = None
    ip_err_se: Optional[float] = None
    softmax_mass_se: Optional[float] = None
    bits_per_coord: Optional[float] = None

    def __post_init__(self):
        if self.cosine is not None and not -1.0 - 1e-9 <= self.cosine <= 1.0 + 1e-9:
            raise ValueError(f"余弦越界: {self.cosine}")
        if self.mse is not None and self.mse < 0.0:
            raise ValueError(f"MSE 为负: {self.mse}")

    def to_dict(self) -> Dict[str, Any]:
        return {name: getattr(self, name) for name in self.COLUMNS}


@dataclass
class SweepRow:
    """位分配扫描的一行；增量相对 (b, b) 参考，单位 %"""

    COLUMNS: ClassVar[Tuple[str, ...]] = (
        "bits", "delta", "b_dir", "b_nrm", "n_seeds", "mse", "one_minus_cos", "d_mse_pct", "d_one_minus_cos_pct",
    )

    bits: int
    delta: int
    b_dir: int
    b_nrm: int
    n_seeds: int
    mse: float
    one_minus_cos: float
    d_mse_pct: float = 0.0
    d_one_minus_cos_pct: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {name: getattr(self, name) for name in self.COLUMNS}


@dataclass
class AblationRow:
    """舍入消融的一行；增量相对同位宽 scalar 模式，单位 %"""

    COLUMNS: ClassVar[Tuple[str, ...]] = (
        "bits", "mode", "b_dir", "b_nrm", "n_seeds", "cosine", "mse", "tail95", "ip_err",
        "d_mse_pct", "d_tail95_pct", "d_ip_err_pct",
    )

    bits: int
    mode: str
    b_dir: int
    b_nrm: int
    n_seeds: int
    cosine: float
    mse: float
    tail95: float
    ip_err: float
    d_mse_pct: float = 0.0
    d_tail95_pct: float = 0.0
    d_ip_err_pct: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {name: getattr(self, name) for name in self.COLUMNS}


_ROW_TYPES = {cls.__name__: cls for cls in (MetricRow, SweepRow, AblationRow)}


class ExperimentReport(BaseModel):
    """一次实验的完整结果：配置 + 结果行"""

    def __init__(self, name: str = "", description: str = "", config: Optional[Dict[str, Any]] = None,
                 rows: Optional[List[Any]] = None):
        super().__init__(name, description)
        self.config: Dict[str, Any] = dict(config or {})
        self.rows: List[Any] = list(rows or [])

    @property
    def columns(self) -> Tuple[str, ...]:
        return type(self.rows[0]).COLUMNS if self.rows else MetricRow.COLUMNS

    def find(self, **criteria) -> List[Any]:
        """按字段筛选结果行"""
        return [r for r in self.rows if all(getattr(r, k) == v for k, v in criteria.items())]

    def to_dict(self) -> Dict[str, Any]:
        data = super().to_dict()
        data.update({
            'config': self.config,
            'row_type': type(self.rows[0]).__name__ if self.rows else MetricRow.__name__,
            'rows': [r.to_dict() for r in self.rows],
        })
        return data

    def from_dict(self, data: Dict[str, Any]):
        super().from_dict(data)
        self.config = dict(data.get('config', {}))
        row_cls = _ROW_TYPES.get(data.get('row_type', 'MetricRow'), MetricRow)
        self.rows = [row_cls(**row) for row in data.get('rows', [])]
