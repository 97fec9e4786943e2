"""
分析报告 (report.json) 的数据结构
"""
from typing import Any, Dict, List, Optional, Union

from pydantic import BaseModel, Field

from ..analysis.calibration import BenchmarkRow
from ..analysis.factor_fit import IdentifiabilityReport, RankScore
from ..analysis.robustness import RobustnessReport
from ..config import REPORT_SCHEMA_VERSION


class RegionReport(BaseModel):
    """单个预算、单个模式下的区间"""

    mode: str
    r2_tu: float
    center: float
    halfwidth: float
    lower: float
    upper: float
    envelope: Optional[List[float]] = None  # bootstrap 外包络 [lower, upper]
    lambda_equivalent: Optional[float] = None  # 二值处理时该预算对应的 Λ_α


class OutcomeReport(BaseModel):
    """单个对比一行"""

    label: str
    weights: List[float]
    nuc_effect: float
    nuc_interval: List[float]  # 无 bootstrap 时退化为 [点估计, 点估计]
    regions: List[RegionReport]
    robustness: RobustnessReport
    width_factors: Dict[str, Union[float, str]] = Field(default_factory=dict)
    scale: Optional[float] = None  # 标准化分析时换回原始单位的乘子


class GlobalBound(BaseModel):
    r2_tu: float
    bound: float
    worst_contrast: List[float]


class GlobalReport(BaseModel):
    """与具体对比无关的汇总"""

    sigma2: float
    m: int
    null_controls: List[int] = Field(default_factory=list)  # 从 1 开始编号
    null_control: Optional[Dict[str, Any]] = None
    r2_min: Optional[float] = None
    lambda_min: Optional[float] = None
    mean_propensity: Optional[float] = None
    global_bounds: List[GlobalBound] = Field(default_factory=list)
    identified_contrasts: Optional[List[List[float]]] = None
    identifiability: Optional[IdentifiabilityReport] = None
    rank_table: List[RankScore] = Field(default_factory=list)
    benchmarks: List[BenchmarkRow] = Field(default_factory=list)
    bootstrap: Optional[Dict[str, Any]] = None


class AnalysisReport(BaseModel):
    """report.json 的顶层结构"""

    schema_version: int = REPORT_SCHEMA_VERSION
    data: str = ""
    n: int
    q: int
    p: int
    dropped_rows: int = 0
    treatment: str
    outcome_names: List[str]
    treatment_contrast: Dict[str, float]
    r2_budgets: List[float]
    lambda_alpha: Optional[float] = None
    standardized: bool = False
    outcomes: List[OutcomeReport]
    summary: GlobalReport
