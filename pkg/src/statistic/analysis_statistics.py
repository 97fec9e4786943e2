"""
分析状态上的具体统计量：NUC 点估计、区间端点与稳健性值
"""
import math
from typing import Any, Dict, Mapping

from .base import BaseStatistic, stat_key
from .groups import StatisticGroup

ROBUSTNESS_FIELDS = ("rv1", "xrv", "rv_gamma", "rv_combined", "r2_min")


def region_kind(region: Any, endpoint: str) -> str:
    """区间端点的种类名，例如 factor@0.5|lower"""
    return f"{region.mode}@{region.r2_tu:.6g}|{endpoint}"


class NucEffectStatistic(BaseStatistic):
    """NUC 下的对比效应 a'τ̌Δt"""

    @property
    def name(self) -> str:
        return "nuc_effect"

    @property
    def description(self) -> str:
        return "无未观测混杂假设下的对比效应点估计"

    @property
    def group(self) -> StatisticGroup:
        return StatisticGroup.POINT

    def _extract(self, state: Mapping[str, Any]) -> Dict[str, float]:
        fit = state.get("observed_fit")
        settings = state.get("settings")
        if fit is None or settings is None:
            return {}
        return {
            stat_key(contrast.label, "center"): fit.contrast_effect(contrast, settings.treatment_contrast)
            for contrast in state.get("contrasts", [])
        }


class RegionEndpointStatistic(BaseStatistic):
    """所有无知区间的下端点或上端点"""

    def __init__(self, endpoint: str):
        if endpoint not in ("lower", "upper"):
            raise ValueError(f"未知端点: {endpoint}")
        self.endpoint = endpoint

    @property
    def name(self) -> str:
        return f"region_{self.endpoint}"

    @property
    def description(self) -> str:
        return f"无知区间的{'下' if self.endpoint == 'lower' else '上'}端点"

    @property
    def group(self) -> StatisticGroup:
        return StatisticGroup.REGION_LOWER if self.endpoint == "lower" else StatisticGroup.REGION_UPPER

    def _extract(self, state: Mapping[str, Any]) -> Dict[str, float]:
        values = {}
        for label, regions in state.get("regions", {}).items():
            for region in regions:
                values[stat_key(label, region_kind(region, self.endpoint))] = getattr(region, self.endpoint)
        return values


class RobustnessValueStatistic(BaseStatistic):
    """四种稳健性值与 R²min；无穷值 (效应已被识别) 不参与 bootstrap"""

    @property
    def name(self) -> str:
        return "robustness_values"

    @property
    def description(self) -> str:
        return "RV¹、XRV、RV^Γ、组合稳健性值与 R²min"

    @property
    def group(self) -> StatisticGroup:
        return StatisticGroup.ROBUSTNESS

    def _extract(self, state: Mapping[str, Any]) -> Dict[str, float]:
        values = {}
        for label, report in state.get("robustness", {}).items():
            for field in ROBUSTNESS_FIELDS:
                value = getattr(report, field)
                if value is not None and math.isfinite(value):
                    values[stat_key(label, field)] = value
        return values
