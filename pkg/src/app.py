"""
敏感性分析工作流
把各个分析阶段组装成 LangGraph 状态图
"""
import logging
from typing import Dict, Literal, Optional, Union

from langgraph.graph import END, StateGraph

from .analysis.data_model import Dataset
from .analysis.errors import SensitivityError
from .nodes.base import AnalysisNode
from .nodes.bootstrap import BootstrapNode
from .nodes.bounds import BoundsNode
from .nodes.calibration import CalibrationNode
from .nodes.factor_fit import FactorFitNode
from .nodes.null_control import NullControlNode
from .nodes.regression import RegressionNode
from .nodes.report import ReportNode
from .nodes.robustness import RobustnessNode
from .states.state import AnalysisSettings, AnalysisState, create_state

logger = logging.getLogger(__name__)


def replicate_statistics(dataset: Dataset, settings: AnalysisSettings) -> Dict[str, float]:
    """在一个 bootstrap 样本上重跑工作流，只返回统计量"""
    final_state = workflow.invoke(create_state(dataset, settings))
    _raise_first_error(final_state)
    return final_state["statistics"]


def _raise_first_error(state: AnalysisState) -> None:
    errors = state.get("errors") or []
    if errors:
        raise errors[0]["exception"]


def _failed(state: AnalysisState) -> bool:
    return state.get("status") == "error"


def _next_after_robustness(state: AnalysisState) -> Union[Literal["calibration"], Literal["bootstrap"], Literal["report"]]:
    settings = state["settings"]
    if settings.benchmarks and not settings.replicate and state["dataset"].p > 0:
        return "calibration"
    return _next_after_calibration(state)


def _next_after_calibration(state: AnalysisState) -> Union[Literal["bootstrap"], Literal["report"]]:
    settings = state["settings"]
    if settings.bootstrap > 0 and not settings.replicate:
        return "bootstrap"
    return "report"


# 创建工作流
def create_workflow():
    workflow = StateGraph(AnalysisState)

    # 添加节点
    nodes: Dict[str, AnalysisNode] = {
        "regression": RegressionNode(),
        "factor_fit": FactorFitNode(),
        "bounds": BoundsNode(),
        "null_controls": NullControlNode(),
        "robustness": RobustnessNode(),
        "calibration": CalibrationNode(),
        "bootstrap": BootstrapNode(replicate_statistics),
        "report": ReportNode(),
    }
    for name, node in nodes.items():
        workflow.add_node(name, node)

    def route_after_regression(state: AnalysisState) -> Union[Literal["factor_fit"], Literal["END"]]:
        return "END" if _failed(state) else "factor_fit"

    def route_after_factor_fit(state: AnalysisState) -> Union[Literal["bounds"], Literal["END"]]:
        return "END" if _failed(state) else "bounds"

    def route_after_bounds(state: AnalysisState) -> Union[Literal["null_controls"], Literal["robustness"], Literal["END"]]:
        """有阴性对照时先做阴性对照分析"""
        if _failed(state):
            return "END"
        return "null_controls" if state["settings"].null_controls else "robustness"

    def route_after_null_controls(state: AnalysisState) -> Union[Literal["robustness"], Literal["END"]]:
        return "END" if _failed(state) else "robustness"

    def route_after_robustness(state: AnalysisState) -> str:
        """基准表只在有协变量的主运行中计算，bootstrap 只在主运行中展开"""
        return "END" if _failed(state) else _next_after_robustness(state)

    def route_after_calibration(state: AnalysisState) -> str:
        return "END" if _failed(state) else _next_after_calibration(state)

    def route_after_bootstrap(state: AnalysisState) -> Union[Literal["report"], Literal["END"]]:
        return "END" if _failed(state) else "report"

    # 设置边和条件路由
    workflow.add_conditional_edges(
        "regression", route_after_regression, {"factor_fit": "factor_fit", "END": END}
    )
    workflow.add_conditional_edges(
        "factor_fit", route_after_factor_fit, {"bounds": "bounds", "END": END}
    )
    workflow.add_conditional_edges(
        "bounds",
        route_after_bounds,
        {"null_controls": "null_controls", "robustness": "robustness", "END": END},
    )
    workflow.add_conditional_edges(
        "null_controls", route_after_null_controls, {"robustness": "robustness", "END": END}
    )
    workflow.add_conditional_edges(
        "robustness",
        route_after_robustness,
        {"calibration": "calibration", "bootstrap": "bootstrap", "report": "report", "END": END},
    )
    workflow.add_conditional_edges(
        "calibration",
        route_after_calibration,
        {"bootstrap": "bootstrap", "report": "report", "END": END},
    )
    workflow.add_conditional_edges(
        "bootstrap", route_after_bootstrap, {"report": "report", "END": END}
    )
    workflow.add_edge("report", END)

    # 设置入口点
    workflow.set_entry_point("regression")

    return workflow.compile()


# 创建工作流实例
workflow = create_workflow()


def run_analysis(dataset: Dataset, settings: Optional[AnalysisSettings] = None) -> AnalysisState:
    """运行完整分析

    Args:
        dataset: 数据集
        settings: 分析设置

    Returns:
        最终状态，state["report"] 为 AnalysisReport

    Raises:
        SensitivityError: 任一节点失败时抛出该节点记录的第一个异常
    """
    settings = settings or AnalysisSettings()
    logger.info(f"开始分析: n={dataset.n}, q={dataset.q}, p={dataset.p}, 预算={settings.r2_budgets}")
    final_state = workflow.invoke(create_state(dataset, settings))
    _raise_first_error(final_state)
    if final_state.get("status") != "completed":
        raise SensitivityError(f"工作流未正常结束: {final_state.get('status')}")
    return final_state
