"""
成对 (行) bootstrap

每个重复 r 的重抽样下标由 default_rng([seed, r, attempt]) 生成，
因此结果与调度顺序无关；失败的重复换新种子重试，超过次数后计入失败数。
"""
import logging
from typing import Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, Field

from ..config import BOOTSTRAP_LEVEL, BOOTSTRAP_MAX_RETRIES, DEFAULT_BOOTSTRAP, DEFAULT_SEED, N_JOBS
from ..statistic.base import stat_key
from ..statistic.groups import StatisticGroup
from .data_model import Dataset
from .errors import SensitivityError, ValidationError

logger = logging.getLogger(__name__)

Pipeline = Callable[[Dataset], Mapping[str, float]]

__all__ = [
    "BootstrapContext",
    "BootstrapSummary",
    "StatisticInterval",
    "bootstrap_analysis",
    "stat_key",
]


class BootstrapContext(BaseModel):
    """bootstrap 设置"""

    b: int = Field(default=DEFAULT_BOOTSTRAP, ge=1)
    seed: int = DEFAULT_SEED
    level: float = Field(default=BOOTSTRAP_LEVEL, gt=0.0, lt=1.0)
    statistics: List[str] = Field(default_factory=list)  # 为空表示全部
    n_jobs: int = N_JOBS
    reselect_rank: bool = False
    max_retries: int = Field(default=BOOTSTRAP_MAX_RETRIES, ge=0)


class StatisticInterval(BaseModel):
    """单个统计量的百分位区间"""

    name: str
    group: StatisticGroup
    lower: float
    upper: float
    n_replicates: int

    @property
    def reported(self) -> float:
        """按组规则报告的单个值：上端点统计量取上分位数，其余取下分位数"""
        return self.upper if self.group is StatisticGroup.REGION_UPPER else self.lower


class BootstrapSummary(BaseModel):
    """bootstrap 结果汇总"""

    b: int
    level: float
    failures: int
    intervals: Dict[str, StatisticInterval]

    def interval(self, name: str) -> Optional[Tuple[float, float]]:
        item = self.intervals.get(name)
        return None if item is None else (item.lower, item.upper)

    def conservative(self, name: str) -> Optional[float]:
        """下 (1−level)/2 分位数，用于稳健性值"""
        item = self.intervals.get(name)
        return None if item is None else item.lower

    def envelope(self, lower_name: str, upper_name: str) -> Optional[Tuple[float, float]]:
        """外包络 [下端点的下分位数, 上端点的上分位数]"""
        lower = self.intervals.get(lower_name)
        upper = self.intervals.get(upper_name)
        if lower is None or upper is None:
            return None
        return lower.lower, upper.upper


def _replicate(d: Dataset, pipeline: Pipeline, ctx: BootstrapContext, index: int) -> Optional[Dict[str, float]]:
    for attempt in range(ctx.max_retries + 1):
        rng = np.random.default_rng([ctx.seed, index, attempt])
        rows = rng.integers(0, d.n, d.n)
        try:
            return dict(pipeline(d.subset_rows(rows)))
        except (SensitivityError, np.linalg.LinAlgError, FloatingPointError) as exc:
            logger.debug(f"bootstrap 重复 {index} 第 {attempt + 1} 次失败: {exc}")
    return None


def bootstrap_analysis(
    d: Dataset,
    pipeline: Pipeline,
    ctx: BootstrapContext,
    groups: Optional[Mapping[str, StatisticGroup]] = None,
) -> BootstrapSummary:
    """对整个分析流程做成对 bootstrap

    Args:
        d: 数据集
        pipeline: 数据集 -> {统计量全名: 数值} 的确定性函数
        ctx: bootstrap 设置
        groups: 统计量全名 -> 组；缺省视为 POINT

    Returns:
        BootstrapSummary，各统计量在 ctx.level 下的百分位区间
    """
    groups = groups or {}
    results = Parallel(n_jobs=ctx.n_jobs, prefer="threads")(
        delayed(_replicate)(d, pipeline, ctx, index) for index in range(ctx.b)
    )
    failures = sum(result is None for result in results)
    if failures:
        logger.warning(f"{failures} 个 bootstrap 重复在重试后仍然失败")
    successes = [result for result in results if result is not None]
    if not successes:
        raise ValidationError("所有 bootstrap 重复均失败")

    names = sorted({name for result in successes for name in result})
    if ctx.statistics:
        names = [name for name in names if name in set(ctx.statistics)]
    tail = (1.0 - ctx.level) / 2.0 * 100.0
    intervals: Dict[str, StatisticInterval] = {}
    for name in names:
        values = np.array([result[name] for result in successes if name in result], dtype=float)
        values = values[np.isfinite(values)]
        if values.size == 0:
            continue
        low, high = np.percentile(values, [tail, 100.0 - tail])
        intervals[name] = StatisticInterval(
            name=name,
            group=groups.get(name, StatisticGroup.POINT),
            lower=float(low),
            upper=float(high),
            n_replicates=int(values.size),
        )
    logger.info(f"bootstrap 完成: B={ctx.b}, 失败 {failures}, 统计量 {len(intervals)} 个")
    return BootstrapSummary(b=ctx.b, level=ctx.level, failures=failures, intervals=intervals)
