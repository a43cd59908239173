# -*- coding: utf-8 -*-
"""
实验驱动
Experiment drivers

- run_table1: 合成探针（高斯键/查询），各编解码器 × 位宽
- run_needle: 针检索的 softmax 质量
- run_bitsplit_sweep: 对角位分配扫描
- run_rounding_ablation: 方向舍入模式消融

同一种子下所有编解码器使用完全相同的键与查询；种子可以并行运行，
聚合顺序固定为种子顺序，结果与并行度无关。
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from ..core.codebook_store import CodebookStore
from ..core.marginals import SampleStream
from ..models.codec_model import RoundingMode
from ..models.experiment_model import (
    NEEDLE_NORMS,
    AblationConfig,
    AblationRow,
    ExperimentReport,
    MetricRow,
    NeedleConfig,
    SweepConfig,
    SweepRow,
    SyntheticProbeConfig,
)
from ..templates.codec_templates import build_codec, get_codec_template, octopus_split, warm_codebooks
from .metrics import (
    aggregate,
    ip_abs_error,
    mean_and_stderr,
    metric_suite,
    per_key_errors,
    percent_change,
    softmax_mass,
    tail95,
)

logger = logging.getLogger(__name__)

KEY_STREAM = 1
QUERY_STREAM = 2
NEEDLE_STREAM = 3

Cell = Tuple[str, int]


def probe_draws(dim: int, n_keys: int, n_queries: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """某个种子的高斯键与查询；所有编解码器共用"""
    keys = SampleStream(seed, KEY_STREAM).generator().standard_normal((n_keys, dim))
    queries = SampleStream(seed, QUERY_STREAM).generator().standard_normal((n_queries, dim))
    return keys, queries


def needle_draws(dim: int, distractors: int, noise_fraction: float, seed: int, needle_norm: str = "fixed"):
    """(keys, query, needle_index)：目标键随机插入干扰键之间

    needle_norm="fixed" 时目标键方向随机、范数固定为 √d；"gaussian" 时直接取高斯样本。
    """
    if needle_norm not in NEEDLE_NORMS:
        raise ValueError(f"未知的目标键范数方式: {needle_norm}（可选: {', '.join(NEEDLE_NORMS)}）")
    rng = SampleStream(seed, NEEDLE_STREAM).generator()
    needle = rng.standard_normal(dim)
    if needle_norm == "fixed":
        needle *= np.sqrt(dim) / np.linalg.norm(needle)
    others = rng.standard_normal((distractors, dim))
    g = rng.standard_normal(dim)
    index = int(rng.integers(0, distractors + 1))
    keys = np.insert(others, index, needle, axis=0)
    query = needle + noise_fraction * np.linalg.norm(needle) * g / np.linalg.norm(g)
    return keys, query, index


def _cells(codecs: Sequence[str], bits: Sequence[int]) -> List[Cell]:
    """(codec, bits) 网格；fp32 只出现一次，低于最小位宽的单元跳过"""
    cells: List[Cell] = []
    for key in codecs:
        template = get_codec_template(key)
        if template.family == "identity":
            cells.append((key, 32))
            continue
        cells.extend((key, b) for b in bits if b >= template.min_bits)
    return cells


def _over_seeds(fn: Callable[[int], Dict], seeds: Sequence[int], workers: int) -> List[Dict]:
    if workers <= 1:
        return [fn(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, seeds))


def _warm(cells: List[Cell], dim: int, store: CodebookStore):
    for key, b in cells:
        warm_codebooks([key], dim, [b], store)


# ---------------------------------------------------------------- 合成探针

def run_table1(cfg: SyntheticProbeConfig, store: CodebookStore) -> ExperimentReport:
    """全部编解码器 × 位宽，在共享的种子上统计 cos / MSE / IP 误差"""
    cells = _cells(cfg.codecs, cfg.bits)
    _warm(cells, cfg.dim, store)
    seeds = [cfg.base_seed + i for i in range(cfg.n_seeds)]

    def one_seed(seed: int) -> Dict[Cell, MetricRow]:
        keys, queries = probe_draws(cfg.dim, cfg.n_keys, cfg.n_queries, seed)
        out = {}
        for key, b in cells:
            codec = build_codec(key, cfg.dim, b, seed, store, cfg.rounding)
            out[(key, b)] = metric_suite(keys, queries, codec)
        logger.info("合成探针种子 %d 完成", seed)
        return out

    per_seed = _over_seeds(one_seed, seeds, cfg.workers)
    rows = [aggregate([result[cell] for result in per_seed]) for cell in cells]
    return ExperimentReport("table1", "synthetic reconstruction fidelity", cfg.to_dict(), rows)


# ---------------------------------------------------------------- 针检索

def run_needle(cfg: NeedleConfig, store: CodebookStore) -> ExperimentReport:
    """每个 (codec, bits) 一行，softmax_mass 为目标键上的平均质量"""
    cells = _cells(cfg.codecs, cfg.bits)
    _warm(cells, cfg.dim, store)
    seeds = [cfg.base_seed + i for i in range(cfg.n_seeds)]

    def one_seed(seed: int) -> Dict[Cell, float]:
        keys, query, index = needle_draws(cfg.dim, cfg.distractors, cfg.noise_fraction, seed, cfg.needle_norm)
        out = {}
        for key, b in cells:
            codec = build_codec(key, cfg.dim, b, seed, store, cfg.rounding)
            scores = codec.score(query[None, :], codec.encode(keys))[0]
            out[(key, b)] = softmax_mass(scores, index, cfg.softmax_scale)
        return out

    per_seed = _over_seeds(one_seed, seeds, cfg.workers)
    rows = []
    for key, b in cells:
        mass, se = mean_and_stderr([result[(key, b)] for result in per_seed])
        rate = build_codec(key, cfg.dim, b, cfg.base_seed, store, cfg.rounding).bits_per_coord()
        rows.append(MetricRow(codec=key, bits=b, n_seeds=len(seeds), softmax_mass=mass,
                              softmax_mass_se=se, bits_per_coord=rate))
        logger.info("针检索 %s b=%d: %.4f", key, b, mass)
    return ExperimentReport("needle", "needle-in-a-haystack softmax mass", cfg.to_dict(), rows)


# ---------------------------------------------------------------- 位分配扫描

def run_bitsplit_sweep(cfg: SweepConfig, store: CodebookStore) -> ExperimentReport:
    """(b+δ, b-δ) 扫描，增量相对 δ=0"""
    seeds = [cfg.base_seed + i for i in range(cfg.n_seeds)]
    grid = [(b, delta) for b in cfg.bits for delta in cfg.deltas if 1 <= b - delta <= 8 and 1 <= b + delta <= 8]
    if not grid:
        raise ValueError("位分配扫描没有有效的单元")
    sums: Dict[Tuple[int, int], List[float]] = {cell: [0.0, 0.0] for cell in grid}
    for seed in seeds:
        keys, _ = probe_draws(cfg.dim, cfg.n_keys, 1, seed)
        for b, delta in grid:
            codec = build_codec("octopus", cfg.dim, b, seed, store, cfg.rounding, split=(b + delta, b - delta))
            cos, sq = per_key_errors(keys, codec.decode(codec.encode(keys)))
            sums[(b, delta)][0] += float(np.mean(sq))
            sums[(b, delta)][1] += float(np.mean(1.0 - cos))
        logger.info("位分配扫描种子 %d 完成", seed)

    rows = []
    for b, delta in grid:
        mse, gap = (v / len(seeds) for v in sums[(b, delta)])
        rows.append(SweepRow(bits=b, delta=delta, b_dir=b + delta, b_nrm=b - delta,
                             n_seeds=len(seeds), mse=mse, one_minus_cos=gap))
    for row in rows:
        ref = next((r for r in rows if r.bits == row.bits and r.delta == 0), None)
        if ref is not None:
            row.d_mse_pct = percent_change(row.mse, ref.mse)
            row.d_one_minus_cos_pct = percent_change(row.one_minus_cos, ref.one_minus_cos)
    return ExperimentReport("bitsplit", "diagonal bit-split sweep", cfg.to_dict(), rows)


# ---------------------------------------------------------------- 舍入消融

def run_rounding_ablation(cfg: AblationConfig, store: CodebookStore) -> ExperimentReport:
    """各舍入模式的 cos / MSE / tail95 / IP，增量相对同位宽的 scalar"""
    seeds = [cfg.base_seed + i for i in range(cfg.n_seeds)]
    grid = [(b, mode) for b in cfg.bits for mode in cfg.modes]
    stats: Dict[Tuple[int, RoundingMode], Dict[str, list]] = {
        cell: {'cos': [], 'sq': [], 'ip': []} for cell in grid
    }
    for seed in seeds:
        keys, queries = probe_draws(cfg.dim, cfg.n_keys, cfg.n_queries, seed)
        for b, mode in grid:
            codec = build_codec("octopus", cfg.dim, b, seed, store, mode)
            state = codec.encode(keys)
            cos, sq = per_key_errors(keys, codec.decode(state))
            stats[(b, mode)]['cos'].append(cos)
            stats[(b, mode)]['sq'].append(sq)
            stats[(b, mode)]['ip'].append(ip_abs_error(queries, keys, codec.score(queries, state)))
        logger.info("舍入消融种子 %d 完成", seed)

    rows = []
    for b, mode in grid:
        b_dir, b_nrm = octopus_split(b)
        sq = np.concatenate(stats[(b, mode)]['sq'])
        rows.append(AblationRow(
            bits=b, mode=mode.value, b_dir=b_dir, b_nrm=b_nrm, n_seeds=len(seeds),
            cosine=float(np.mean(np.concatenate(stats[(b, mode)]['cos']))),
            mse=float(np.mean(sq)),
            tail95=tail95(sq),
            ip_err=float(np.mean(stats[(b, mode)]['ip'])),
        ))
    for row in rows:
        ref = next(r for r in rows if r.bits == row.bits and r.mode == RoundingMode.SCALAR.value)
        row.d_mse_pct = percent_change(row.mse, ref.mse)
        row.d_tail95_pct = percent_change(row.tail95, ref.tail95)
        row.d_ip_err_pct = percent_change(row.ip_err, ref.ip_err)
    return ExperimentReport("rounding", "rounding-mode ablation", cfg.to_dict(), rows)
