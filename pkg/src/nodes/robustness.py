from ..analysis.robustness import report_robustness
from ..states.state import AnalysisState
from .base import AnalysisNode


class RobustnessNode(AnalysisNode):
    """稳健性节点：每个对比的 RV¹、XRV、RV^Γ 与组合稳健性值"""

    name = "robustness"
    done_status = "robustness_done"

    def run(self, state: AnalysisState) -> AnalysisState:
        settings = state["settings"]
        reports = {}
        for contrast in state["contrasts"]:
            reports[contrast.label] = report_robustness(
                state["factor_model"],
                state["observed_fit"],
                contrast,
                settings.treatment_contrast,
                controls=tuple(settings.null_controls),
                label=contrast.label,
                nca=state.get("null_control"),
            )
        state["robustness"] = reports
        return state
