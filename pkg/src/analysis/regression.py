"""
第一阶段估计：观测数据条件均值 (OLS) 与处理残差方差，以及二值处理的倾向得分 (logistic)
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import List, Optional, Sequence

import numpy as np
from scipy.special import expit

from ..config import (
    PROPENSITY_CLAMP,
    PROPENSITY_GRAD_TOL,
    PROPENSITY_MAX_ITER,
    PROPENSITY_MAX_NORM,
    RANK_TOL,
)
from .data_model import ContrastLike, Dataset, TreatmentContrast, contrast_vector
from .errors import ConvergenceFailure, NonBinaryTreatment, PerfectSeparation, RankDeficient, SingleClass

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ObservedFit:
    """观测数据回归结果

    coef 的行依次为 截距、处理、协变量；outcome_residuals 为 Y 减去拟合均值。
    """

    coef: np.ndarray  # (p+2)×q
    outcome_residuals: np.ndarray  # n×q
    sigma2: float  # Var(T^{⊥X})，自由度 n−p−1
    treatment_coef: np.ndarray  # p+1，T 对 [1, X] 的回归系数

    @property
    def tau_check(self) -> np.ndarray:
        """NUC 下每单位处理的效应 τ̌ (coef 的处理行)"""
        return self.coef[1]

    @property
    def n(self) -> int:
        return self.outcome_residuals.shape[0]

    @property
    def q(self) -> int:
        return self.outcome_residuals.shape[1]

    @property
    def sigma(self) -> float:
        return float(np.sqrt(self.sigma2))

    @cached_property
    def residual_cov(self) -> np.ndarray:
        """残差样本协方差 S (分母 n−1)"""
        return np.atleast_2d(np.cov(self.outcome_residuals, rowvar=False))

    def sigma2_ay(self, a: ContrastLike) -> float:
        """σ²_{a'Y} = a'S a"""
        weights = contrast_vector(a, self.q)
        return float(weights @ self.residual_cov @ weights)

    def contrast_effect(self, a: ContrastLike, tc: TreatmentContrast) -> float:
        """NUC 下的对比效应 a'τ̌·(t1 − t2)"""
        weights = contrast_vector(a, self.q)
        return float(weights @ self.tau_check * tc.delta)


@dataclass(frozen=True)
class PropensityModel:
    """logistic 倾向得分模型 e(x) = P(T=1 | X=x)"""

    coef: np.ndarray  # p+1，截距在前
    fitted: np.ndarray  # n，已截断到 (0, 1)
    treatment: np.ndarray  # 拟合时使用的处理向量，用于核对样本一致性
    covariate_names: Sequence[str] = ()

    @property
    def mean_propensity(self) -> float:
        return float(self.fitted.mean())

    @property
    def odds(self) -> np.ndarray:
        return self.fitted / (1.0 - self.fitted)


def _design(d: Dataset, covariate_index: Optional[Sequence[int]] = None) -> np.ndarray:
    covariates = d.covariates if covariate_index is None else d.covariates[:, list(covariate_index)]
    return np.column_stack([np.ones(d.n), covariates])


def _collinear_columns(matrix: np.ndarray, names: List[str], tol: float = RANK_TOL) -> List[str]:
    """逐列累加，返回无法提升秩的列名"""
    offending = []
    kept: List[int] = []
    for k in range(matrix.shape[1]):
        candidate = matrix[:, kept + [k]]
        singular = np.linalg.svd(candidate, compute_uv=False)
        if singular.size == 0 or singular[-1] <= tol * max(singular[0], 1.0):
            offending.append(names[k])
        else:
            kept.append(k)
    return offending


def fit_observed(d: Dataset) -> ObservedFit:
    """对每个结局做 Y ~ [1, T, X] 的最小二乘，并估计 σ² = Var(T^{⊥X})

    Raises:
        RankDeficient: 设计矩阵列满秩不成立，列出共线列 (处理列最后检查)
    """
    covariates = _design(d)
    ordered = np.column_stack([covariates, d.treatment])
    names = ["intercept"] + list(d.covariate_names) + [d.treatment_name]
    offending = _collinear_columns(ordered, names)
    if offending:
        raise RankDeficient(offending)

    design = np.column_stack([np.ones(d.n), d.treatment, d.covariates])
    coef, *_ = np.linalg.lstsq(design, d.outcomes, rcond=None)
    residuals = d.outcomes - design @ coef

    treatment_coef, *_ = np.linalg.lstsq(covariates, d.treatment, rcond=None)
    treatment_resid = d.treatment - covariates @ treatment_coef
    sigma2 = float(treatment_resid @ treatment_resid / (d.n - d.p - 1))
    if not sigma2 > 0:
        raise RankDeficient([d.treatment_name])

    logger.debug(f"OLS 完成: n={d.n}, q={d.q}, p={d.p}, sigma2={sigma2:.6g}")
    return ObservedFit(coef=coef, outcome_residuals=residuals, sigma2=sigma2, treatment_coef=treatment_coef)


def fit_propensity(
    d: Dataset,
    covariate_index: Optional[Sequence[int]] = None,
    clamp: float = PROPENSITY_CLAMP,
    grad_tol: float = PROPENSITY_GRAD_TOL,
    max_norm: float = PROPENSITY_MAX_NORM,
    max_iter: int = PROPENSITY_MAX_ITER,
) -> PropensityModel:
    """Newton 法拟合 logistic 倾向得分

    Args:
        d: 二值处理数据集
        covariate_index: 使用的协变量下标，None 表示全部 (标定时用于拟合去掉某协变量的模型)
        clamp: 拟合值距 0/1 的最小距离
        grad_tol: 梯度范数收敛阈值
        max_norm: 系数范数超过该值视为完全分离

    Raises:
        NonBinaryTreatment: 数据集未标记为二值处理
        SingleClass: 处理只有一个类别
        PerfectSeparation: 系数发散
    """
    if not d.binary_treatment:
        raise NonBinaryTreatment(d.treatment.tolist())
    classes = np.unique(d.treatment)
    if classes.size < 2:
        raise SingleClass(float(classes[0]))

    design = _design(d, covariate_index)
    t = d.treatment
    beta = np.zeros(design.shape[1])
    for iteration in range(max_iter):
        prob = expit(design @ beta)
        grad = design.T @ (t - prob)
        if np.linalg.norm(grad) < grad_tol:
            break
        hessian = design.T @ (design * (prob * (1.0 - prob))[:, None])
        try:
            step = np.linalg.solve(hessian, grad)
        except np.linalg.LinAlgError:
            raise PerfectSeparation(float(np.linalg.norm(beta)))
        beta = beta + step
        norm = float(np.linalg.norm(beta))
        if not np.isfinite(norm) or norm > max_norm:
            raise PerfectSeparation(norm)
        if np.linalg.norm(step) < 1e-14 * max(1.0, norm):
            break
    else:
        raise ConvergenceFailure(f"logistic 回归 {max_iter} 次迭代未收敛")

    prob = expit(design @ beta)
    if np.max(np.abs(t - prob)) < 1e-6:
        # 拟合值与处理完全一致：梯度已消失但系数只是在发散途中
        raise PerfectSeparation(float(np.linalg.norm(beta)))
    fitted = np.clip(expit(design @ beta), clamp, 1.0 - clamp)
    names = d.covariate_names if covariate_index is None else [d.covariate_names[k] for k in covariate_index]
    logger.debug(f"倾向得分拟合完成，迭代 {iteration + 1} 次")
    return PropensityModel(coef=beta, fitted=fitted, treatment=np.array(d.treatment), covariate_names=tuple(names))
