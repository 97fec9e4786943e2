"""
阴性对照约束下的识别

阴性对照结局的真实效应为零，因此其观测效应全部来自混杂，
据此得到 R²min、修正后的中心与收缩的区间。
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Literal, Sequence, Tuple, Union

import numpy as np

from ..config import FEASIBILITY_TOL, PINV_TOL
from .data_model import ContrastLike, SensitivityQuery, TreatmentContrast, contrast_vector
from .errors import BudgetBelowMinimum, InfeasibleNullControls, InvalidControls
from .factor_fit import FactorModel
from .regression import ObservedFit
from .sensitivity_bounds import IgnoranceRegion

logger = logging.getLogger(__name__)

FeasibilityPolicy = Literal["error", "warn"]


class Identification(Enum):
    """对比效应在因子混杂下已被识别"""

    IDENTIFIED = "identified"


IDENTIFIED = Identification.IDENTIFIED


def odds_to_r2(odds: float) -> float:
    """w ↦ w/(1+w)"""
    return float(odds / (1.0 + odds))


def r2_to_odds(r2: float) -> float:
    return float(r2 / (1.0 - r2))


@dataclass(frozen=True)
class NullControlAnalysis:
    """阴性对照分析结果，tau_c 以对比单位 (乘以 Δt) 表示"""

    controls: Tuple[int, ...]
    gamma_c: np.ndarray  # c×m
    tau_c: np.ndarray  # c
    r2_min: float
    pinv_tau: np.ndarray  # m，Γ_C† τ̌_C
    projector: np.ndarray  # m×m，P⊥ = I − Γ_C†Γ_C
    colspace_residual: float
    delta_t: float
    sigma2: float
    effect: np.ndarray  # q，τ̌Δt；投影时对照坐标替换为 tau_c
    feasible: bool = True
    projected: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            "controls": list(self.controls),
            "tau_c": self.tau_c.tolist(),
            "r2_min": self.r2_min,
            "pinv_tau_norm": float(np.linalg.norm(self.pinv_tau)),
            "colspace_residual": self.colspace_residual,
            "feasible": self.feasible,
            "projected": self.projected,
        }


def analyze_null_controls(
    fm: FactorModel,
    fit: ObservedFit,
    controls: Sequence[int],
    tc: TreatmentContrast,
    tol: float = PINV_TOL,
    feasibility: FeasibilityPolicy = "error",
    feasibility_tol: float = FEASIBILITY_TOL,
) -> NullControlAnalysis:
    """计算 R²min、Γ_C† τ̌_C 与列空间可行性

    Args:
        controls: 阴性对照结局的下标 (从 0 开始)
        tol: 伪逆的相对奇异值阈值
        feasibility: 列空间不可行时 "error" 抛错，"warn" 投影后继续
        feasibility_tol: 相对残差阈值

    Raises:
        InvalidControls: 对照集合为空、覆盖全部结局或越界
        InfeasibleNullControls: 对照效应不在 Γ_C 的列空间中 (error 策略)
    """
    controls = tuple(sorted(int(c) for c in controls))
    if not controls or len(controls) >= fm.q:
        raise InvalidControls(f"阴性对照数量必须在 1..{fm.q - 1} 之间")
    if len(set(controls)) != len(controls) or controls[0] < 0 or controls[-1] >= fm.q:
        raise InvalidControls(f"阴性对照下标不合法: {controls}")

    dt = tc.delta
    gamma_c = fm.gamma[list(controls)]
    tau_c = fit.tau_check[list(controls)] * dt
    pinv = np.linalg.pinv(gamma_c, rcond=tol) if fm.m else np.zeros((0, len(controls)))
    fitted = gamma_c @ pinv @ tau_c
    residual = float(np.linalg.norm(tau_c - fitted))
    scale = float(np.linalg.norm(tau_c))

    feasible = not (scale > 0 and residual / scale > feasibility_tol)
    projected = False
    if not feasible:
        if feasibility == "error":
            raise InfeasibleNullControls(residual, scale)
        logger.warning(f"阴性对照效应不在 Γ_C 列空间中 (相对残差 {residual / scale:.3g})，投影后继续")
        tau_c = fitted
        projected = True

    effect = fit.tau_check * dt
    effect[list(controls)] = tau_c
    pinv_tau = pinv @ tau_c
    projector = np.eye(fm.m) - pinv @ gamma_c
    r2_min = odds_to_r2(fit.sigma2 * float(pinv_tau @ pinv_tau) / dt ** 2)
    return NullControlAnalysis(
        controls=controls,
        gamma_c=gamma_c,
        tau_c=tau_c,
        r2_min=r2_min,
        pinv_tau=pinv_tau,
        projector=projector,
        colspace_residual=residual,
        delta_t=dt,
        sigma2=fit.sigma2,
        effect=effect,
        feasible=feasible,
        projected=projected,
    )


def corrected_effect(fm: FactorModel, fit: ObservedFit, a: ContrastLike, nca: NullControlAnalysis) -> float:
    """修正中心 a'τ̌Δt − a'ΓΓ_C†τ̌_C，即 R² = R²min 时被识别的效应"""
    weights = contrast_vector(a, fm.q)
    return float(weights @ nca.effect - weights @ fm.gamma @ nca.pinv_tau)


def residual_loading_norm(fm: FactorModel, a: ContrastLike, nca: NullControlAnalysis) -> float:
    """‖a'ΓP⊥‖"""
    weights = contrast_vector(a, fm.q)
    return float(np.linalg.norm(weights @ fm.gamma @ nca.projector))


def nc_ignorance_region(
    fm: FactorModel,
    fit: ObservedFit,
    query: SensitivityQuery,
    tol: float = PINV_TOL,
    feasibility: FeasibilityPolicy = "error",
    nca: NullControlAnalysis = None,
) -> IgnoranceRegion:
    """阴性对照约束下的无知区间

    中心移到修正效应，半宽为 ‖a'ΓP⊥‖·sqrt(Δt²/σ²·(R²/(1−R²) − R²min/(1−R²min)))。

    Raises:
        BudgetBelowMinimum: 混杂预算小于 R²min
    """
    if not query.null_controls:
        raise InvalidControls("阴性对照区间需要非空的对照集合")
    if nca is None:
        nca = analyze_null_controls(fm, fit, query.null_controls, query.treatment_contrast, tol, feasibility)
    if query.r2_tu < nca.r2_min:
        raise BudgetBelowMinimum(query.r2_tu, nca.r2_min)

    center = corrected_effect(fm, fit, query.contrast, nca)
    radicand = nca.delta_t ** 2 / fit.sigma2 * (r2_to_odds(query.r2_tu) - r2_to_odds(nca.r2_min))
    halfwidth = residual_loading_norm(fm, query.contrast, nca) * float(np.sqrt(max(radicand, 0.0)))
    return IgnoranceRegion(
        label=query.contrast.label, center=center, halfwidth=halfwidth, r2_tu=query.r2_tu, mode="null_control"
    )


def width_reduction_factor(
    fm: FactorModel,
    a: ContrastLike,
    nca: NullControlAnalysis,
    r2: float,
) -> Union[float, Identification]:
    """阴性对照区间半宽与无对照区间半宽之比

    sqrt(1 − (R²min/(1−R²min)) / (R²/(1−R²))) · ‖a'ΓP⊥‖/‖a'Γ‖

    Returns:
        [0, 1] 内的实数；‖a'Γ‖ = 0 时返回 IDENTIFIED
    """
    if r2 < nca.r2_min:
        raise BudgetBelowMinimum(r2, nca.r2_min)
    full = fm.loading_norm(a)
    if full == 0.0:
        return IDENTIFIED
    if r2 == 0.0:
        # 此时 R²min 也为 0，两种区间都退化为点
        shrink = 1.0
    else:
        shrink = float(np.sqrt(max(1.0 - r2_to_odds(nca.r2_min) / r2_to_odds(r2), 0.0)))
    return min(shrink * residual_loading_norm(fm, a, nca) / full, 1.0)
