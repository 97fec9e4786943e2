from ..analysis.data_model import SensitivityQuery
from ..analysis.null_controls import IDENTIFIED, analyze_null_controls, nc_ignorance_region, width_reduction_factor
from ..states.state import AnalysisState
from .base import AnalysisNode


class NullControlNode(AnalysisNode):
    """阴性对照节点：R²min、修正中心与收缩区间"""

    name = "null_controls"
    done_status = "null_controls_done"

    def run(self, state: AnalysisState) -> AnalysisState:
        settings = state["settings"]
        fit = state["observed_fit"]
        model = state["factor_model"]
        tc = settings.treatment_contrast

        nca = analyze_null_controls(
            model, fit, settings.null_controls, tc, tol=settings.pinv_tol, feasibility=settings.feasibility
        )
        state["null_control"] = nca

        factors = {}
        for contrast in state["contrasts"]:
            per_budget = {}
            for r2 in settings.r2_budgets:
                query = SensitivityQuery(
                    contrast=contrast, treatment_contrast=tc, r2_tu=r2, null_controls=tuple(settings.null_controls)
                )
                state["regions"][contrast.label].append(nc_ignorance_region(model, fit, query, nca=nca))
                factor = width_reduction_factor(model, contrast, nca, r2)
                per_budget[f"{r2:.6g}"] = IDENTIFIED.value if factor is IDENTIFIED else factor
            factors[contrast.label] = per_budget
        state["width_factors"] = factors
        return state
