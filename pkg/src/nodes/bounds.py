from ..analysis.data_model import SensitivityQuery
from ..analysis.errors import ValidationError
from ..analysis.sensitivity_bounds import global_bound, identified_contrasts, ignorance_region
from ..states.state import AnalysisState
from .base import AnalysisNode


class BoundsNode(AnalysisNode):
    """区间节点：每个对比、每个预算的因子区间与极端区间，以及全局界"""

    name = "bounds"
    done_status = "bounds_done"

    def run(self, state: AnalysisState) -> AnalysisState:
        settings = state["settings"]
        fit = state["observed_fit"]
        model = state["factor_model"]
        tc = settings.treatment_contrast

        regions = {}
        for contrast in state["contrasts"]:
            rows = []
            for r2 in settings.r2_budgets:
                query = SensitivityQuery(contrast=contrast, treatment_contrast=tc, r2_tu=r2)
                rows.append(ignorance_region(model, fit, query, mode="factor"))
                rows.append(ignorance_region(model, fit, query, mode="extreme"))
            regions[contrast.label] = rows
        state["regions"] = regions

        if settings.replicate:
            return state

        bounds = []
        for r2 in settings.r2_budgets:
            bound, worst = global_bound(model, fit, tc, r2)
            bounds.append({"r2_tu": r2, "bound": bound, "worst_contrast": worst.tolist()})
        state["global_bounds"] = bounds

        try:
            state["identified_contrasts"] = identified_contrasts(model).T.tolist()
        except ValidationError:
            state["identified_contrasts"] = None
        return state
