from typing import Callable, Dict

from ..analysis.data_model import Dataset
from ..analysis.uncertainty import BootstrapContext, bootstrap_analysis
from ..states.state import AnalysisSettings, AnalysisState
from ..statistic.registry import statistic_registry
from .base import AnalysisNode

ReplicatePipeline = Callable[[Dataset, AnalysisSettings], Dict[str, float]]


class BootstrapNode(AnalysisNode):
    """bootstrap 节点：对整个流程做成对重抽样

    pipeline 由工作流装配时注入，通常是以 replicate 设置再次调用同一工作流。
    """

    name = "bootstrap"
    done_status = "bootstrap_done"

    def __init__(self, pipeline: ReplicatePipeline):
        self.pipeline = pipeline

    def run(self, state: AnalysisState) -> AnalysisState:
        settings = state["settings"]
        model = state["factor_model"]
        replicate_settings = settings.model_copy(
            update={
                "bootstrap": 0,
                "replicate": True,
                "standardize": False,
                "benchmarks": False,
                "n_jobs": 1,
                "rank": None if settings.reselect_rank else model.m,
                "auto_rank": settings.reselect_rank,
            }
        )
        context = BootstrapContext(
            b=settings.bootstrap,
            seed=settings.seed,
            level=settings.level,
            n_jobs=settings.n_jobs,
            reselect_rank=settings.reselect_rank,
        )
        _, groups = statistic_registry.collect(state)
        state["bootstrap"] = bootstrap_analysis(
            state["dataset"], lambda data: self.pipeline(data, replicate_settings), context, groups
        )
        return state
