"""
节点模块
包含敏感性分析工作流中的各个阶段节点
"""

from .base import AnalysisNode
from .regression import RegressionNode
from .factor_fit import FactorFitNode
from .bounds import BoundsNode
from .null_control import NullControlNode
from .robustness import RobustnessNode
from .calibration import CalibrationNode
from .bootstrap import BootstrapNode
from .report import ReportNode

__all__ = [
    'AnalysisNode',
    'RegressionNode',
    'FactorFitNode',
    'BoundsNode',
    'NullControlNode',
    'RobustnessNode',
    'CalibrationNode',
    'BootstrapNode',
    'ReportNode',
]
