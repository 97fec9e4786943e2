"""
稳健性值：把点估计推到零所需的最小 R²_{T∼U|X}

rv_single 采用 R²_T = R²_Y 的等预算约定，rv_extreme 假设 R²_{a'Y∼U} = 1，
rv_gamma 使用因子载荷，rv_combined 额外利用阴性对照。
"""
import logging
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from ..config import FEASIBILITY_TOL, PINV_TOL, RV_DEGENERACY_TOL
from .data_model import ContrastLike, TreatmentContrast, contrast_vector
from .factor_fit import FactorModel
from .null_controls import (
    FeasibilityPolicy,
    NullControlAnalysis,
    analyze_null_controls,
    corrected_effect,
    odds_to_r2,
    residual_loading_norm,
)
from .regression import ObservedFit
from .uncertainty import stat_key

logger = logging.getLogger(__name__)

ZERO_EFFECT_TOL = 1e-10


class RobustnessStatus(str, Enum):
    FINITE = "Finite"
    IDENTIFIED_ZERO = "IdentifiedZero"
    IDENTIFIED_NONZERO = "IdentifiedNonzero"


class RobustnessReport(BaseModel):
    """单个对比的稳健性值汇总"""

    label: str = ""
    rv1: float
    xrv: float
    rv_gamma: float
    rv_combined: Optional[float] = None
    r2_min: Optional[float] = None
    rv_combined_excess: Optional[float] = None
    status: RobustnessStatus = RobustnessStatus.FINITE
    combined_status: Optional[RobustnessStatus] = None
    conservative: bool = False
    lambda_rv1: Optional[float] = None
    lambda_xrv: Optional[float] = None
    lambda_rv_gamma: Optional[float] = None
    lambda_rv_combined: Optional[float] = None
    lambda_min: Optional[float] = None


def _effect_per_unit(fit: ObservedFit, weights: np.ndarray) -> float:
    return float(weights @ fit.tau_check)


def _outcome_variance(fit: ObservedFit, fm: Optional[FactorModel], weights: np.ndarray) -> float:
    return fm.implied_variance(weights) if fm is not None else fit.sigma2_ay(weights)


def _partial_f2(fit: ObservedFit, fm: Optional[FactorModel], weights: np.ndarray) -> float:
    """f² = σ²(a'τ̌)²/σ²_{a'Y}"""
    variance = _outcome_variance(fit, fm, weights)
    effect = _effect_per_unit(fit, weights)
    if effect == 0.0:
        return 0.0
    return fit.sigma2 * effect ** 2 / variance


def rv_single(fit: ObservedFit, fm: Optional[FactorModel], a: ContrastLike, tc: TreatmentContrast) -> float:
    """RV¹ = ½(√(f⁴+4f²) − f²)

    Δt 在定义方程两边相消，结果与 tc 无关。
    """
    f2 = _partial_f2(fit, fm, contrast_vector(a, fit.q))
    if f2 == 0.0:
        return 0.0
    # 有理化形式，f² 很小时不损失精度
    return float(2.0 * f2 / (np.sqrt(f2 * f2 + 4.0 * f2) + f2))


def rv_extreme(fit: ObservedFit, a: ContrastLike, tc: TreatmentContrast, fm: Optional[FactorModel] = None) -> float:
    """XRV = f²/(1+f²)"""
    f2 = _partial_f2(fit, fm, contrast_vector(a, fit.q))
    return odds_to_r2(f2)


def _loading_is_zero(fm: FactorModel, weights: np.ndarray, norm: float, tol: float) -> bool:
    singular = fm.singular_values()
    top = float(singular[0]) if singular.size else 0.0
    return top == 0.0 or norm <= tol * float(np.linalg.norm(weights)) * top


def _effect_is_zero(value: float, scale: float) -> bool:
    return value == 0.0 or abs(value) <= ZERO_EFFECT_TOL * scale


def gamma_status(fm: FactorModel, fit: ObservedFit, a: ContrastLike, tol: float = RV_DEGENERACY_TOL) -> RobustnessStatus:
    """无阴性对照时对比的识别状态"""
    weights = contrast_vector(a, fm.q)
    if not _loading_is_zero(fm, weights, fm.loading_norm(weights), tol):
        return RobustnessStatus.FINITE
    effect = _effect_per_unit(fit, weights)
    scale = float(np.linalg.norm(weights) * np.linalg.norm(fit.tau_check))
    if _effect_is_zero(effect, scale):
        return RobustnessStatus.IDENTIFIED_ZERO
    return RobustnessStatus.IDENTIFIED_NONZERO


def rv_gamma(fm: FactorModel, fit: ObservedFit, a: ContrastLike, tc: TreatmentContrast, tol: float = RV_DEGENERACY_TOL) -> float:
    """RV^Γ = ω/(1+ω)，ω = σ²(a'τ̌)²/‖a'Γ‖²

    ‖a'Γ‖ = 0 时效应已被识别：效应为零返回 0，否则返回 inf (不存在稳健性值)。
    """
    weights = contrast_vector(a, fm.q)
    status = gamma_status(fm, fit, weights, tol)
    if status is RobustnessStatus.IDENTIFIED_ZERO:
        return 0.0
    if status is RobustnessStatus.IDENTIFIED_NONZERO:
        return float("inf")
    effect = _effect_per_unit(fit, weights)
    numerator = fit.sigma2 * effect ** 2
    return float(numerator / (numerator + fm.loading_norm(weights) ** 2))


def rv_combined(
    fm: FactorModel,
    fit: ObservedFit,
    a: ContrastLike,
    tc: TreatmentContrast,
    controls: Sequence[int],
    tol: float = RV_DEGENERACY_TOL,
    nca: Optional[NullControlAnalysis] = None,
    pinv_tol: float = PINV_TOL,
    feasibility: FeasibilityPolicy = "error",
) -> Tuple[float, RobustnessStatus]:
    """利用阴性对照的组合稳健性值 w/(1+w)

    w = (σ²/Δt²)[(修正中心)²/‖a'ΓP⊥‖² + ‖Γ_C†τ̌_C‖²]。
    ‖a'ΓP⊥‖/‖a'Γ‖ 低于阈值时效应被识别，按修正中心是否为零给出状态。

    Returns:
        (value, status)；识别为零时值为 R²min，识别为非零时为 inf
    """
    weights = contrast_vector(a, fm.q)
    if not controls:
        value = rv_gamma(fm, fit, weights, tc, tol)
        return value, gamma_status(fm, fit, weights, tol)
    if nca is None:
        nca = analyze_null_controls(fm, fit, controls, tc, pinv_tol, feasibility)

    full = fm.loading_norm(weights)
    projected = residual_loading_norm(fm, weights, nca)
    center = corrected_effect(fm, fit, weights, nca)
    if full == 0.0 or projected < tol * full:
        scale = abs(float(weights @ nca.effect)) + abs(float(weights @ fm.gamma @ nca.pinv_tau))
        if _effect_is_zero(center, scale):
            return nca.r2_min, RobustnessStatus.IDENTIFIED_ZERO
        return float("inf"), RobustnessStatus.IDENTIFIED_NONZERO

    odds = fit.sigma2 / nca.delta_t ** 2 * (center ** 2 / projected ** 2 + float(nca.pinv_tau @ nca.pinv_tau))
    return odds_to_r2(odds), RobustnessStatus.FINITE


def report_robustness(
    fm: FactorModel,
    fit: ObservedFit,
    a: ContrastLike,
    tc: TreatmentContrast,
    controls: Sequence[int] = (),
    bootstrap=None,
    label: str = "",
    tol: float = RV_DEGENERACY_TOL,
    nca: Optional[NullControlAnalysis] = None,
    feasibility: FeasibilityPolicy = "error",
) -> RobustnessReport:
    """汇总四种稳健性值

    Args:
        bootstrap: 可选的 BootstrapSummary；提供时各值替换为 bootstrap 下 2.5% 分位数
        label: 对比标签，同时用于在 bootstrap 结果中查找统计量

    Returns:
        RobustnessReport
    """
    weights = contrast_vector(a, fm.q)
    if not label and hasattr(a, "label"):
        label = a.label
    values = {
        "rv1": rv_single(fit, fm, weights, tc),
        "xrv": rv_extreme(fit, weights, tc, fm),
        "rv_gamma": rv_gamma(fm, fit, weights, tc, tol),
    }
    status = gamma_status(fm, fit, weights, tol)
    combined_status = None
    r2_min = None
    if controls:
        if nca is None:
            nca = analyze_null_controls(fm, fit, controls, tc, feasibility=feasibility)
        values["rv_combined"], combined_status = rv_combined(fm, fit, weights, tc, controls, tol, nca)
        r2_min = nca.r2_min
        values["r2_min"] = r2_min

    conservative = False
    if bootstrap is not None:
        for kind in list(values):
            lower = bootstrap.conservative(stat_key(label, kind))
            if lower is not None:
                values[kind] = lower
                conservative = True

    excess = None
    if values.get("rv_combined") is not None and values.get("r2_min") is not None and np.isfinite(values["rv_combined"]):
        excess = values["rv_combined"] - values["r2_min"]

    return RobustnessReport(
        label=label,
        rv1=values["rv1"],
        xrv=values["xrv"],
        rv_gamma=values["rv_gamma"],
        rv_combined=values.get("rv_combined"),
        r2_min=values.get("r2_min"),
        rv_combined_excess=excess,
        status=status,
        combined_status=combined_status,
        conservative=conservative,
    )
