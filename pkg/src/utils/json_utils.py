import json
import math
from enum import Enum
from pathlib import Path
from typing import Any, Union

import numpy as np
from pydantic import BaseModel


def sanitize(value: Any) -> Any:
    """把报告对象转换为可严格序列化的 JSON 结构

    非有限浮点数 (inf、nan) 写为 null，numpy 标量与数组转为 Python 原生类型。
    """
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, BaseModel):
        return sanitize(value.model_dump(mode="python"))
    if isinstance(value, dict):
        return {str(k): sanitize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [sanitize(v) for v in value]
    if isinstance(value, np.ndarray):
        return sanitize(value.tolist())
    if isinstance(value, np.generic):
        return sanitize(value.item())
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    return value


def dumps_report(value: Any) -> str:
    """确定性的 JSON 文本：固定缩进、保留字段顺序、结尾换行"""
    return json.dumps(sanitize(value), indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def write_json(value: Any, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_report(value), encoding="utf-8")
    return path


def read_json(path: Union[str, Path]) -> Any:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)
