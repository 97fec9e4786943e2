"""
因子混杂下的闭式偏差界与无知区间

halfwidth = |t1 − t2| / σ · sqrt(R²/(1−R²)) · ‖a'Γ‖，
在 ρ 与 Γ'a 共线时取到。
"""
import logging
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..config import RANK_TOL
from .data_model import ContrastLike, SensitivityQuery, TreatmentContrast, contrast_vector
from .errors import BoundsViolation, ValidationError
from .factor_fit import FactorModel
from .regression import ObservedFit

logger = logging.getLogger(__name__)

RegionMode = Literal["factor", "extreme", "null_control"]


class IgnoranceRegion(BaseModel):
    """无知区间 [center − halfwidth, center + halfwidth]"""

    model_config = ConfigDict(frozen=True)

    label: str = ""
    center: float
    halfwidth: float = Field(ge=0.0)
    r2_tu: float
    mode: RegionMode = "factor"

    @property
    def lower(self) -> float:
        return self.center - self.halfwidth

    @property
    def upper(self) -> float:
        return self.center + self.halfwidth

    def contains(self, value: float, slack: float = 0.0) -> bool:
        return self.lower - slack <= value <= self.upper + slack

    def rescaled(self, factor: float) -> "IgnoranceRegion":
        """换算到原始结局单位 (factor 为该结局的标准差)"""
        return self.model_copy(update={"center": self.center * factor, "halfwidth": self.halfwidth * abs(factor)})

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "center": self.center,
            "halfwidth": self.halfwidth,
            "lower": self.lower,
            "upper": self.upper,
            "r2_tu": self.r2_tu,
            "mode": self.mode,
        }


def _check_budget(r2: float) -> None:
    if not (0.0 <= r2 < 1.0):
        raise BoundsViolation(f"混杂预算必须在 [0, 1) 内: {r2}")


def confounding_multiplier(r2: float) -> float:
    """sqrt(R²/(1−R²))"""
    _check_budget(r2)
    return float(np.sqrt(r2 / (1.0 - r2)))


def inverse_sqrt_sigma(rho: np.ndarray) -> np.ndarray:
    """Σ = I − ρρ' 的逆平方根 (秩一更新的闭式)"""
    rho = np.asarray(rho, dtype=float).reshape(-1)
    r2 = float(rho @ rho)
    if r2 >= 1.0:
        raise BoundsViolation("‖ρ‖² 必须小于 1")
    eye = np.eye(rho.size)
    if r2 == 0.0:
        return eye
    coefficient = (1.0 / np.sqrt(1.0 - r2) - 1.0) / r2
    return eye + coefficient * np.outer(rho, rho)


def bias_at_rho(gamma: np.ndarray, a: ContrastLike, rho: np.ndarray, sigma2: float, dt: float) -> float:
    """给定 ρ 的精确偏差 a'ΓΣ^{-1/2}ρ · Δt / σ"""
    weights = contrast_vector(a, gamma.shape[0])
    return float(weights @ gamma @ inverse_sqrt_sigma(rho) @ np.asarray(rho, dtype=float) * dt / np.sqrt(sigma2))


def bias_bound(fm: FactorModel, fit: ObservedFit, query: SensitivityQuery) -> float:
    """因子混杂下的最坏偏差 |Δt|/σ · sqrt(R²/(1−R²)) · ‖a'Γ‖"""
    weights = contrast_vector(query.contrast, fm.q)
    dt = abs(query.treatment_contrast.delta)
    return dt / fit.sigma * confounding_multiplier(query.r2_tu) * float(np.linalg.norm(weights @ fm.gamma))


def extreme_bias_bound(fit: ObservedFit, query: SensitivityQuery, fm: Optional[FactorModel] = None) -> float:
    """R²_{a'Y∼U}=1 时的极端偏差界，以 σ²_{a'Y} 代替 ‖a'Γ‖²

    提供 fm 时使用模型隐含方差 ‖a'Γ‖² + a'Δa，否则使用残差样本方差。
    """
    weights = contrast_vector(query.contrast, fit.q)
    variance = fm.implied_variance(weights) if fm is not None else fit.sigma2_ay(weights)
    dt = abs(query.treatment_contrast.delta)
    return dt / fit.sigma * confounding_multiplier(query.r2_tu) * float(np.sqrt(max(variance, 0.0)))


def ignorance_region(
    fm: FactorModel,
    fit: ObservedFit,
    query: SensitivityQuery,
    mode: RegionMode = "factor",
) -> IgnoranceRegion:
    """以 NUC 点估计为中心的无知区间

    Args:
        mode: "factor" 使用 bias_bound，"extreme" 使用 extreme_bias_bound
    """
    center = fit.contrast_effect(query.contrast, query.treatment_contrast)
    if mode == "factor":
        halfwidth = bias_bound(fm, fit, query)
    elif mode == "extreme":
        halfwidth = extreme_bias_bound(fit, query, fm)
    else:
        raise ValidationError(f"不支持的区间模式: {mode}")
    return IgnoranceRegion(label=query.contrast.label, center=center, halfwidth=halfwidth, r2_tu=query.r2_tu, mode=mode)


def global_bound(fm: FactorModel, fit: ObservedFit, tc: TreatmentContrast, r2: float) -> Tuple[float, np.ndarray]:
    """所有单位对比上的最坏偏差，及取到它的对比 (Γ 的第一左奇异向量)

    Returns:
        (bound, worst_contrast)
    """
    multiplier = confounding_multiplier(r2)
    if fm.m == 0:
        worst = np.zeros(fm.q)
        worst[0] = 1.0
        return 0.0, worst
    left, singular, _ = np.linalg.svd(fm.gamma, full_matrices=False)
    worst = left[:, 0].copy()
    if worst[np.argmax(np.abs(worst))] < 0:
        worst = -worst
    bound = abs(tc.delta) / fit.sigma * multiplier * float(singular[0])
    return bound, worst


def identified_contrasts(fm: FactorModel, tol: float = RANK_TOL) -> np.ndarray:
    """Null(Γ') 的正交基，按列返回 q×k 矩阵

    这些对比上不存在混杂偏差。

    Raises:
        ValidationError: 零空间为空 (m = q 且 Γ 满秩)
    """
    if fm.m == 0:
        return np.eye(fm.q)
    basis = scipy.linalg.null_space(fm.gamma.T, rcond=tol)
    if basis.shape[1] == 0:
        raise ValidationError("Γ' 的零空间为空，没有可识别的对比")
    return basis


class LoadingGroup(BaseModel):
    """异方差界的一个协变量分组：Γ_{t,x}、μ_{t|x} 与权重"""

    gamma: List[List[float]]
    mu: float
    weight: float = Field(ge=0.0)
    gamma_t2: Optional[List[List[float]]] = None

    @model_validator(mode="after")
    def _shapes(self) -> "LoadingGroup":
        if self.gamma_t2 is not None and np.shape(self.gamma_t2) != np.shape(self.gamma):
            raise ValueError("gamma_t2 与 gamma 形状必须一致")
        return self


def hetero_bias_bound(
    groups: Sequence[LoadingGroup],
    a: ContrastLike,
    tc: TreatmentContrast,
    r2: float,
    sigma: float,
) -> float:
    """异方差载荷下的偏差界

    (1/σ)·sqrt(R²/(1−R²))·Σ_g w_g (‖a'Γ_{t1,g}‖|t1−μ_g| + ‖a'Γ_{t2,g}‖|t2−μ_g|)
    """
    if not groups:
        raise ValidationError("至少需要一个分组")
    weights_sum = sum(group.weight for group in groups)
    if abs(weights_sum - 1.0) > 1e-9:
        raise ValidationError(f"分组权重之和必须为 1: {weights_sum}")
    multiplier = confounding_multiplier(r2)
    total = 0.0
    for group in groups:
        gamma_t1 = np.atleast_2d(np.asarray(group.gamma, dtype=float))
        gamma_t2 = gamma_t1 if group.gamma_t2 is None else np.atleast_2d(np.asarray(group.gamma_t2, dtype=float))
        weights = contrast_vector(a, gamma_t1.shape[0])
        total += group.weight * (
            np.linalg.norm(weights @ gamma_t1) * abs(tc.t1 - group.mu)
            + np.linalg.norm(weights @ gamma_t2) * abs(tc.t2 - group.mu)
        )
    return float(multiplier * total / sigma)
