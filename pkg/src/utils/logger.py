# -*- coding: utf-8 -*-
"""
日志配置
Logging setup

库代码只通过 logging.getLogger(__name__) 记录；命令行入口负责安装处理器。
"""

import logging
import sys
from typing import Optional, TextIO

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

_handler: Optional[logging.Handler] = None


def setup_logging(level: int = logging.WARNING, stream: Optional[TextIO] = None) -> logging.Logger:
    """为 ``src`` 包安装唯一的流处理器，重复调用只调整级别和输出流"""
    global _handler
    root = logging.getLogger("src")
    if _handler is None:
        _handler = logging.StreamHandler(stream or sys.stderr)
        _handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root.addHandler(_handler)
    elif stream is not None:
        _handler.setStream(stream)
    root.setLevel(level)
    return root
