from typing import Any, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator
from typing_extensions import TypedDict

from ..analysis.data_model import Contrast, Dataset, TreatmentContrast
from ..config import BOOTSTRAP_LEVEL, CV_FOLDS, DEFAULT_SEED, N_JOBS, PINV_TOL


class AnalysisSettings(BaseModel):
    """一次分析的全部设置"""

    r2_budgets: List[float] = Field(default_factory=lambda: [0.5])
    treatment_contrast: TreatmentContrast = Field(default_factory=TreatmentContrast)
    contrasts: List[Contrast] = Field(default_factory=list)  # 除单位对比外的自定义对比
    null_controls: List[int] = Field(default_factory=list)  # 从 0 开始的结局下标
    rank: Optional[int] = None
    auto_rank: bool = False
    m_max: Optional[int] = None
    cv_folds: int = CV_FOLDS
    lambda_alpha: Optional[float] = None
    feasibility: Literal["error", "warn"] = "error"
    pinv_tol: float = PINV_TOL
    bootstrap: int = 0
    level: float = BOOTSTRAP_LEVEL
    seed: int = DEFAULT_SEED
    n_jobs: int = N_JOBS
    reselect_rank: bool = False
    standardize: bool = False
    benchmarks: bool = True
    replicate: bool = False  # bootstrap 重复内部运行：只计算统计量
    data_name: str = ""

    @model_validator(mode="after")
    def _check(self) -> "AnalysisSettings":
        if any(not (0.0 <= r2 < 1.0) for r2 in self.r2_budgets):
            raise ValueError(f"混杂预算必须在 [0, 1) 内: {self.r2_budgets}")
        if self.rank is not None and self.auto_rank:
            raise ValueError("--rank 与 --auto-rank 不能同时使用")
        if self.rank is None and not self.auto_rank:
            self.auto_rank = True
        if self.lambda_alpha is not None and not (0.0 < self.lambda_alpha <= 1.0):
            raise ValueError(f"α 必须在 (0, 1] 内: {self.lambda_alpha}")
        if self.bootstrap < 0:
            raise ValueError("bootstrap 次数不能为负")
        return self


class AnalysisState(TypedDict, total=False):
    """分析工作流状态"""

    # 输入
    dataset: Dataset  # 分析使用的数据集 (标准化后)
    settings: AnalysisSettings  # 分析设置
    scale: Optional[np.ndarray]  # 结局标准差，未标准化时为 None

    # 回归节点
    observed_fit: Any  # ObservedFit
    propensity: Any  # PropensityModel，仅二值处理且需要 Λ 换算时
    contrasts: List[Contrast]  # 单位对比 + 自定义对比

    # 因子节点
    factor_model: Any  # FactorModel
    rank_table: List[Any]  # 自动选秩时的 RankScore 列表
    identifiability: Any  # IdentifiabilityReport

    # 区间节点
    regions: Dict[str, List[Any]]  # 对比标签 -> IgnoranceRegion 列表
    global_bounds: List[Dict[str, Any]]  # 每个预算的全局界与最坏对比
    identified_contrasts: Optional[List[List[float]]]  # Null(Γ') 的基 (按行)
    width_factors: Dict[str, Dict[str, Any]]  # 对比标签 -> {预算: 宽度缩减因子}

    # 阴性对照节点
    null_control: Any  # NullControlAnalysis

    # 稳健性节点
    robustness: Dict[str, Any]  # 对比标签 -> RobustnessReport

    # 标定节点
    benchmarks: List[Any]  # BenchmarkRow 列表

    # bootstrap 节点
    bootstrap: Any  # BootstrapSummary

    # 报告节点
    statistics: Dict[str, float]  # 统计量全名 -> 数值
    statistic_groups: Dict[str, Any]  # 统计量全名 -> StatisticGroup
    report: Any  # AnalysisReport

    # 状态控制
    errors: List[Dict[str, Any]]  # 错误记录
    status: str  # 当前状态


def create_state(dataset: Dataset, settings: Optional[AnalysisSettings] = None) -> AnalysisState:
    """创建初始状态

    Args:
        dataset: 数据集
        settings: 分析设置，默认使用 AnalysisSettings()

    Returns:
        初始状态
    """
    return {
        # 输入
        "dataset": dataset,
        "settings": settings or AnalysisSettings(),
        "scale": None,

        # 中间结果
        "contrasts": [],
        "rank_table": [],
        "regions": {},
        "global_bounds": [],
        "identified_contrasts": None,
        "width_factors": {},
        "null_control": None,
        "robustness": {},
        "benchmarks": [],
        "bootstrap": None,

        # 输出
        "statistics": {},
        "statistic_groups": {},
        "report": None,

        # 状态控制
        "errors": [],
        "status": "created",
    }
