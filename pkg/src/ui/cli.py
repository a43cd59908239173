# -*- coding: utf-8 -*-
"""
命令行界面
Command-line interface

子命令：
    train-codebooks  训练并保存 C_ξ / C_ρ 码本
    bench table1     合成探针
    bench needle     针检索
    sweep bitsplit   对角位分配扫描
    sweep rounding   舍入模式消融
    roundtrip        对原始 f32 矩阵文件做编码-解码并打印指标
结果以 CSV 打印到标准输出，可选写入 CSV / JSON 文件。
"""

import argparse
import logging
import sys
from typing import List, Optional, TextIO

import numpy as np

from ..analysis.experiments import run_bitsplit_sweep, run_needle, run_rounding_ablation, run_table1
from ..analysis.metrics import per_key_errors
from ..analysis.report_writer import rows_to_csv_text, write_csv, write_json
from ..core import codec as octo
from ..core.codebook_store import CodebookStore
from ..models.codec_model import RoundingMode
from ..models.experiment_model import NEEDLE_NORMS, AblationConfig, NeedleConfig, SweepConfig, SyntheticProbeConfig
from ..templates.codec_templates import build_codec
from ..utils.config_loader import apply_overrides, load_config
from ..utils.logger import setup_logging
from ..utils.matrix_io import read_matrix, write_matrix

logger = logging.getLogger(__name__)

ROUNDTRIP_COLUMNS = ("codec", "bits", "n_keys", "dim", "bits_per_coord", "payload_bytes", "cosine", "mse")


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"需要逗号分隔的整数列表: {text}") from None


def _str_list(text: str) -> List[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _rounding(text: str) -> RoundingMode:
    try:
        return RoundingMode(text)
    except ValueError:
        choices = ", ".join(m.value for m in RoundingMode)
        raise argparse.ArgumentTypeError(f"未知的舍入模式 {text}（可选: {choices}）") from None


def _mode_list(text: str) -> List[RoundingMode]:
    return [_rounding(v) for v in _str_list(text)]


def _add_output_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON5 配置文件，命令行参数优先")
    p.add_argument("--out", help="CSV 输出文件")
    p.add_argument("--json", dest="json_out", help="JSON 输出文件")
    p.add_argument("--codebooks", help="码本目录：优先加载，新训练的码本写回")
    p.add_argument("--base-seed", dest="base_seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="octopus", description="Rotation-preconditioned triplet key codec")
    parser.add_argument("-v", "--verbose", action="store_true", help="输出调试日志")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-codebooks", help="训练并保存 C_ξ 与 C_ρ")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--bits", type=_int_list, required=True)
    p.add_argument("--out", required=True, help="码本目录")
    p.add_argument("--baselines", action="store_true", help="同时训练基线码本")

    bench = sub.add_parser("bench", help="合成实验").add_subparsers(dest="experiment", required=True)
    p = bench.add_parser("table1", help="合成探针")
    p.add_argument("--dim", type=int)
    p.add_argument("--keys", dest="n_keys", type=int)
    p.add_argument("--queries", dest="n_queries", type=int)
    p.add_argument("--seeds", dest="n_seeds", type=int)
    p.add_argument("--codecs", type=_str_list)
    p.add_argument("--bits", type=_int_list)
    p.add_argument("--rounding", type=_rounding)
    p.add_argument("--workers", type=int)
    _add_output_flags(p)

    p = bench.add_parser("needle", help="针检索")
    p.add_argument("--dim", type=int)
    p.add_argument("--distractors", type=int)
    p.add_argument("--noise", dest="noise_fraction", type=float)
    p.add_argument("--needle-norm", dest="needle_norm", choices=NEEDLE_NORMS, help="目标键范数：固定为 √d 或直接取高斯样本")
    p.add_argument("--seeds", dest="n_seeds", type=int)
    p.add_argument("--codecs", "--codec", dest="codecs", type=_str_list)
    p.add_argument("--bits", type=_int_list)
    p.add_argument("--rounding", type=_rounding)
    p.add_argument("--workers", type=int)
    _add_output_flags(p)

    sweep = sub.add_parser("sweep", help="消融扫描").add_subparsers(dest="experiment", required=True)
    p = sweep.add_parser("bitsplit", help="对角位分配扫描")
    p.add_argument("--dim", type=int)
    p.add_argument("--keys", dest="n_keys", type=int)
    p.add_argument("--seeds", dest="n_seeds", type=int)
    p.add_argument("--bits", type=_int_list)
    p.add_argument("--deltas", type=_int_list)
    p.add_argument("--rounding", type=_rounding)
    _add_output_flags(p)

    p = sweep.add_parser("rounding", help="舍入模式消融")
    p.add_argument("--dim", type=int)
    p.add_argument("--keys", dest="n_keys", type=int)
    p.add_argument("--queries", dest="n_queries", type=int)
    p.add_argument("--seeds", dest="n_seeds", type=int)
    p.add_argument("--bits", type=_int_list)
    p.add_argument("--modes", type=_mode_list)
    _add_output_flags(p)

    p = sub.add_parser("roundtrip", help="原始矩阵编码-解码")
    p.add_argument("--in", dest="input", required=True, help="OCTM 矩阵文件")
    p.add_argument("--out", help="解码后的矩阵文件")
    p.add_argument("--bits", type=int, required=True)
    p.add_argument("--qjl", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rounding", type=_rounding, default=RoundingMode.LOCAL3X3)
    p.add_argument("--codebooks", help="码本目录")
    return parser


# ---------------------------------------------------------------- 子命令

_EXPERIMENTS = {
    ("bench", "table1"): (SyntheticProbeConfig, run_table1,
                          ("dim", "n_keys", "n_queries", "n_seeds", "codecs", "bits", "rounding", "workers")),
    ("bench", "needle"): (NeedleConfig, run_needle,
                          ("dim", "distractors", "noise_fraction", "needle_norm", "n_seeds", "codecs", "bits", "rounding",
                           "workers")),
    ("sweep", "bitsplit"): (SweepConfig, run_bitsplit_sweep,
                            ("dim", "n_keys", "n_seeds", "bits", "deltas", "rounding")),
    ("sweep", "rounding"): (AblationConfig, run_rounding_ablation,
                            ("dim", "n_keys", "n_queries", "n_seeds", "bits", "modes")),
}


def _finish_store(store: CodebookStore):
    if store.directory and store.has_unsaved_changes():
        store.save()


def _run_experiment(args, stdout: TextIO) -> int:
    config_cls, runner, names = _EXPERIMENTS[(args.command, args.experiment)]
    data = load_config(args.config) if args.config else {}
    overrides = {name: getattr(args, name) for name in names + ("base_seed",)}
    cfg = apply_overrides(config_cls, data, **overrides)
    store = CodebookStore(args.codebooks)
    report = runner(cfg, store)
    _finish_store(store)
    stdout.write(rows_to_csv_text(report.rows, report.columns))
    if args.out:
        write_csv(args.out, report.rows, report.columns)
    if args.json_out:
        write_json(args.json_out, report)
    return 0


def _train_codebooks(args, stdout: TextIO) -> int:
    store = CodebookStore()
    for b in args.bits:
        store.get_xi(b)
        store.get_rho(args.dim, b)
        if args.baselines:
            store.get_coord(args.dim, b)
            store.get_polar(args.dim, b)
    for path in store.save(args.out):
        stdout.write(path + "\n")
    return 0


def _roundtrip(args, stdout: TextIO) -> int:
    keys = read_matrix(args.input).astype(np.float64)
    n, dim = keys.shape
    if n == 0:
        raise ValueError(f"矩阵为空: {args.input}")
    store = CodebookStore(args.codebooks)
    codec = build_codec("octopus_qjl" if args.qjl else "octopus", dim, args.bits, args.seed, store, args.rounding)
    state = codec.encode(keys)
    blob = octo.pack(codec.cfg, state)
    keys_hat = codec.decode(octo.unpack(codec.cfg, blob))
    _finish_store(store)
    cos, sq = per_key_errors(keys, keys_hat)
    row = {
        "codec": codec.key, "bits": args.bits, "n_keys": n, "dim": dim,
        "bits_per_coord": codec.bits_per_coord(), "payload_bytes": len(blob),
        "cosine": float(np.mean(cos)), "mse": float(np.mean(sq)),
    }
    stdout.write(rows_to_csv_text([row], ROUNDTRIP_COLUMNS))
    if args.out:
        write_matrix(args.out, keys_hat)
    return 0


def cli_main(argv: Optional[List[str]] = None, stdout: Optional[TextIO] = None,
             stderr: Optional[TextIO] = None) -> int:
    """命令行入口，返回退出码；任何失败都只输出一行诊断"""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    setup_logging(logging.DEBUG if args.verbose else logging.WARNING, stderr)
    try:
        if args.command == "train-codebooks":
            return _train_codebooks(args, stdout)
        if args.command == "roundtrip":
            return _roundtrip(args, stdout)
        return _run_experiment(args, stdout)
    except (ValueError, OSError, RuntimeError) as exc:
        logger.debug("命令失败", exc_info=True)
        stderr.write(f"错误: {exc}\n")
        return 1
