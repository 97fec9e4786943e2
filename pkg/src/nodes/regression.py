from ..analysis.data_model import canonical_contrasts, contrast_vector, make_contrast, standardize_outcomes
from ..analysis.errors import InvalidControls, NonBinaryTreatment
from ..analysis.regression import fit_observed, fit_propensity
from ..states.state import AnalysisState
from .base import AnalysisNode


class RegressionNode(AnalysisNode):
    """回归节点：可选的结局标准化、OLS、倾向得分与对比列表"""

    name = "regression"
    done_status = "regression_done"

    def run(self, state: AnalysisState) -> AnalysisState:
        settings = state["settings"]
        dataset = state["dataset"]

        if settings.standardize:
            dataset, scale = standardize_outcomes(dataset)
            state["dataset"] = dataset
            state["scale"] = scale

        if settings.lambda_alpha is not None and not settings.replicate and not dataset.binary_treatment:
            raise NonBinaryTreatment(dataset.treatment.tolist())
        if any(c < 0 or c >= dataset.q for c in settings.null_controls) or len(settings.null_controls) >= dataset.q:
            raise InvalidControls(f"阴性对照下标不合法: {settings.null_controls}")

        state["observed_fit"] = fit_observed(dataset)

        contrasts = canonical_contrasts(dataset)
        for k, custom in enumerate(settings.contrasts):
            weights = contrast_vector(custom, dataset.q)
            contrasts.append(make_contrast(weights, custom.label or f"contrast{k + 1}"))
        state["contrasts"] = contrasts

        if dataset.binary_treatment and settings.lambda_alpha is not None and not settings.replicate:
            state["propensity"] = fit_propensity(dataset)
        return state
