import logging
from typing import Optional

from ..analysis.calibration import lambda_alpha, rv_to_lambda
from ..analysis.errors import BracketingFailure
from ..analysis.robustness import RobustnessReport, report_robustness
from ..states.report import AnalysisReport, GlobalBound, GlobalReport, OutcomeReport, RegionReport
from ..states.state import AnalysisState
from ..statistic.analysis_statistics import region_kind
from ..statistic.base import stat_key
from ..statistic.registry import statistic_registry
from .base import AnalysisNode

logger = logging.getLogger(__name__)


def _to_lambda(value: Optional[float], sigma2: float, mean_propensity: float, alpha: float) -> Optional[float]:
    if value is None or not (0.0 <= value < 1.0):
        return None
    try:
        return rv_to_lambda(value, sigma2, mean_propensity, alpha)
    except BracketingFailure:
        return None


class ReportNode(AnalysisNode):
    """报告节点：收集统计量并组装 AnalysisReport"""

    name = "report"
    done_status = "completed"

    def run(self, state: AnalysisState) -> AnalysisState:
        values, groups = statistic_registry.collect(state)
        state["statistics"] = values
        state["statistic_groups"] = groups
        settings = state["settings"]
        if settings.replicate:
            return state

        dataset = state["dataset"]
        fit = state["observed_fit"]
        model = state["factor_model"]
        tc = settings.treatment_contrast
        summary = state.get("bootstrap")
        nca = state.get("null_control")
        scale = state.get("scale")
        propensity = state.get("propensity")
        alpha = settings.lambda_alpha
        mean_propensity = propensity.mean_propensity if propensity is not None else None

        def to_lambda(value: Optional[float]) -> Optional[float]:
            if mean_propensity is None:
                return None
            return _to_lambda(value, fit.sigma2, mean_propensity, alpha)

        outcomes = []
        for index, contrast in enumerate(state["contrasts"]):
            label = contrast.label
            center = fit.contrast_effect(contrast, tc)
            nuc_interval = [center, center]
            if summary is not None and summary.interval(stat_key(label, "center")) is not None:
                nuc_interval = list(summary.interval(stat_key(label, "center")))

            regions = []
            for region in state["regions"][label]:
                envelope = None
                if summary is not None:
                    found = summary.envelope(
                        stat_key(label, region_kind(region, "lower")), stat_key(label, region_kind(region, "upper"))
                    )
                    envelope = list(found) if found is not None else None
                regions.append(
                    RegionReport(
                        mode=region.mode,
                        r2_tu=region.r2_tu,
                        center=region.center,
                        halfwidth=region.halfwidth,
                        lower=region.lower,
                        upper=region.upper,
                        envelope=envelope,
                        lambda_equivalent=to_lambda(region.r2_tu),
                    )
                )

            robustness: RobustnessReport = state["robustness"][label]
            if summary is not None:
                robustness = report_robustness(
                    model,
                    fit,
                    contrast,
                    tc,
                    controls=tuple(settings.null_controls),
                    bootstrap=summary,
                    label=label,
                    nca=nca,
                )
            if mean_propensity is not None:
                robustness = robustness.model_copy(
                    update={
                        "lambda_rv1": to_lambda(robustness.rv1),
                        "lambda_xrv": to_lambda(robustness.xrv),
                        "lambda_rv_gamma": to_lambda(robustness.rv_gamma),
                        "lambda_rv_combined": to_lambda(robustness.rv_combined),
                        "lambda_min": to_lambda(robustness.r2_min),
                    }
                )

            outcomes.append(
                OutcomeReport(
                    label=label,
                    weights=list(contrast.weights),
                    nuc_effect=center,
                    nuc_interval=nuc_interval,
                    regions=regions,
                    robustness=robustness,
                    width_factors=state.get("width_factors", {}).get(label, {}),
                    scale=float(scale[index]) if scale is not None and index < dataset.q else None,
                )
            )

        lambda_min = None
        if nca is not None and mean_propensity is not None:
            try:
                lambda_min = lambda_alpha(nca.r2_min, fit.sigma2, mean_propensity, alpha)
            except BracketingFailure:
                logger.warning("R²min 对应的 Λ 超出搜索上界")

        global_report = GlobalReport(
            sigma2=fit.sigma2,
            m=model.m,
            null_controls=[c + 1 for c in settings.null_controls],
            null_control=nca.to_dict() if nca is not None else None,
            r2_min=nca.r2_min if nca is not None else None,
            lambda_min=lambda_min,
            mean_propensity=mean_propensity,
            global_bounds=[GlobalBound(**row) for row in state.get("global_bounds", [])],
            identified_contrasts=state.get("identified_contrasts"),
            identifiability=state.get("identifiability"),
            rank_table=state.get("rank_table", []),
            benchmarks=state.get("benchmarks", []),
            bootstrap=(
                {
                    "b": summary.b,
                    "level": summary.level,
                    "failures": summary.failures,
                    "statistics": statistic_registry.get_all_schemas(),
                }
                if summary is not None
                else None
            ),
        )
        state["report"] = AnalysisReport(
            data=settings.data_name,
            n=dataset.n,
            q=dataset.q,
            p=dataset.p,
            dropped_rows=dataset.dropped_rows,
            treatment=dataset.treatment_name,
            outcome_names=list(dataset.outcome_names),
            treatment_contrast={"t1": tc.t1, "t2": tc.t2},
            r2_budgets=list(settings.r2_budgets),
            lambda_alpha=alpha,
            standardized=scale is not None,
            outcomes=outcomes,
            summary=global_report,
        )
        logger.info(f"报告生成完成: {len(outcomes)} 个对比")
        return state
