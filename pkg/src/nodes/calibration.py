from ..analysis.calibration import benchmark_table
from ..states.state import AnalysisState
from .base import AnalysisNode


class CalibrationNode(AnalysisNode):
    """标定节点：按协变量计算偏 R² 基准，二值处理时附 Λ 分位数"""

    name = "calibration"
    done_status = "calibration_done"

    def run(self, state: AnalysisState) -> AnalysisState:
        settings = state["settings"]
        dataset = state["dataset"]
        alpha = settings.lambda_alpha if dataset.binary_treatment else None
        state["benchmarks"] = benchmark_table(dataset, alpha=alpha)
        return state
