# 文件处理工具

from pathlib import Path
from typing import List, Sequence, Union

import pandas as pd

from ..analysis.calibration import BenchmarkRow


def ensure_dir(path: Union[str, Path]) -> Path:
    """创建输出目录 (已存在时直接返回)"""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def benchmark_frame(rows: Sequence[BenchmarkRow], outcome_labels: Sequence[str]) -> pd.DataFrame:
    """基准表展开为一行一个协变量的表格"""
    records = []
    for row in rows:
        record = {"covariate": row.covariate, "partial_r2_treatment": row.partial_r2_treatment}
        for label, value in zip(outcome_labels, row.partial_r2_outcomes):
            record[f"partial_r2_{label}"] = value
        record["lambda_quantile"] = row.lambda_quantile
        records.append(record)
    columns: List[str] = ["covariate", "partial_r2_treatment"]
    columns += [f"partial_r2_{label}" for label in outcome_labels] + ["lambda_quantile"]
    return pd.DataFrame.from_records(records, columns=columns)


def write_benchmark_csv(rows: Sequence[BenchmarkRow], outcome_labels: Sequence[str], path: Union[str, Path]) -> Path:
    """写出 benchmark.csv；浮点数用 repr 精度，缺失值留空"""
    path = Path(path)
    benchmark_frame(rows, outcome_labels).to_csv(path, index=False, float_format="%.17g", na_rep="", lineterminator="\n")
    return path
