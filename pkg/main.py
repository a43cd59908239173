#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
旋转预条件三元组键量化器 - 主程序入口
Rotation-preconditioned triplet key quantizer - Main Entry Point
"""

import os
import sys

# 添加src目录到Python路径
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from src.ui.cli import cli_main


def main():
    """主程序入口"""
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == '__main__':
    main()
