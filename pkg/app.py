#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
敏感性分析命令行入口
"""

import sys
from pathlib import Path

# 添加项目根目录到Python路径
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from src.app import workflow  # noqa: F401  langgraph.json 引用
from src.cli import main

if __name__ == "__main__":
    sys.exit(main())
