import logging

from ..analysis.factor_fit import check_identifiability, fit_factor_em, max_feasible_rank, select_rank
from ..states.state import AnalysisState
from .base import AnalysisNode

logger = logging.getLogger(__name__)


class FactorFitNode(AnalysisNode):
    """因子节点：选秩 (可选)、EM 拟合与可识别性诊断"""

    name = "factor_fit"
    done_status = "factor_done"

    def run(self, state: AnalysisState) -> AnalysisState:
        settings = state["settings"]
        residuals = state["observed_fit"].outcome_residuals

        if settings.auto_rank:
            q = residuals.shape[1]
            m_max = settings.m_max if settings.m_max is not None else max_feasible_rank(q)
            m, table = select_rank(residuals, m_max, folds=settings.cv_folds, seed=settings.seed, n_jobs=settings.n_jobs)
            state["rank_table"] = table
        else:
            m = settings.rank

        model = fit_factor_em(residuals, m)
        state["factor_model"] = model
        if not settings.replicate:
            report = check_identifiability(model)
            if not report.dimension_ok:
                logger.warning(f"m={m} 不满足维数可识别条件 (q={model.q})")
            state["identifiability"] = report
        return state
