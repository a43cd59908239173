# -*- coding: utf-8 -*-
"""
配置加载
Config loader

实验配置文件采用 JSON5（允许注释与尾逗号），命令行参数覆盖文件中的值。
"""

import os
from typing import Any, Dict, Type, TypeVar

import json5

T = TypeVar("T")


def load_config(path: str) -> Dict[str, Any]:
    """读取 .json5 / .json 配置文件，顶层必须是对象"""
    if not os.path.exists(path):
        raise FileNotFoundError(f"配置文件不存在: {path}")
    with open(path, 'r', encoding='utf-8') as f:
        try:
            data = json5.load(f)
        except ValueError as exc:
            raise ValueError(f"配置文件解析失败 {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ValueError(f"配置文件顶层必须是对象: {path}")
    return data


def apply_overrides(config_cls: Type[T], data: Dict[str, Any] = None, **overrides) -> T:
    """文件数据 + 非 None 的命令行覆盖 → 配置对象；未知键报错"""
    merged = dict(data or {})
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return config_cls.from_dict(merged)
