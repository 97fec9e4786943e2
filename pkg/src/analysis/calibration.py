"""
敏感性参数标定

- 以观测协变量为基准的偏 R² (处理侧与结局侧)
- 二值处理的 Λ 参数化：log λ 服从均值 ±μ_λ、方差 σ²_λ = 2μ_λ 的两成分正态混合，
  权重为 E[e(X)] 与 1 − E[e(X)]
"""
import logging
from typing import List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy.optimize import bisect
from scipy.stats import norm

from ..config import LAMBDA_UPPER
from .data_model import ContrastLike, Dataset, canonical_contrasts, contrast_vector
from .errors import BoundsViolation, BracketingFailure, NonBinaryTreatment, ValidationError
from .regression import PropensityModel, fit_propensity

logger = logging.getLogger(__name__)

IndexSet = Union[int, Sequence[int]]


class LambdaParams(BaseModel):
    """log λ 混合分布参数"""

    mu_lambda: float = Field(ge=0.0)
    sigma2_lambda: float = Field(ge=0.0)
    mean_propensity: float = Field(gt=0.0, lt=1.0)

    @model_validator(mode="after")
    def _variance_is_twice_mean(self) -> "LambdaParams":
        if abs(self.sigma2_lambda - 2.0 * self.mu_lambda) > 1e-12 * max(1.0, self.sigma2_lambda):
            raise ValueError("必须满足 σ²_λ = 2μ_λ")
        return self

    @classmethod
    def from_budget(cls, r2: float, sigma2: float, mean_propensity: float) -> "LambdaParams":
        """μ_λ = R²/(2σ²(1−R²))，σ²_λ = 2μ_λ"""
        if not (0.0 <= r2 < 1.0):
            raise BoundsViolation(f"混杂预算必须在 [0, 1) 内: {r2}")
        if sigma2 <= 0:
            raise BoundsViolation(f"σ² 必须为正: {sigma2}")
        mu = r2 / (2.0 * sigma2 * (1.0 - r2))
        return cls(mu_lambda=mu, sigma2_lambda=2.0 * mu, mean_propensity=mean_propensity)

    @property
    def sd(self) -> float:
        return float(np.sqrt(self.sigma2_lambda))


class BenchmarkRow(BaseModel):
    """单个协变量 (或协变量组) 的基准"""

    covariate: str
    partial_r2_treatment: float = Field(ge=0.0, le=1.0)
    partial_r2_outcomes: List[float]
    lambda_quantile: Optional[float] = None


def mixture_cdf(v: Union[float, np.ndarray], params: LambdaParams) -> Union[float, np.ndarray]:
    """log λ 的分布函数"""
    v = np.asarray(v, dtype=float)
    if params.sigma2_lambda == 0.0:
        result = (v >= 0.0).astype(float)
    else:
        e = params.mean_propensity
        result = e * norm.cdf((v - params.mu_lambda) / params.sd) + (1.0 - e) * norm.cdf((v + params.mu_lambda) / params.sd)
    return float(result) if result.ndim == 0 else result


def band_probability(log_band: float, params: LambdaParams) -> float:
    """P(−L ≤ log λ ≤ L)"""
    return float(mixture_cdf(log_band, params) - mixture_cdf(-log_band, params))


def sample_log_lambda(params: LambdaParams, size: int, rng: np.random.Generator) -> np.ndarray:
    """按混合结构抽样 log λ = (2I − 1)Z，I ~ Bern(E[e(X)])，Z ~ N(μ_λ, σ²_λ)"""
    indicator = rng.random(size) < params.mean_propensity
    z = rng.normal(params.mu_lambda, params.sd, size)
    return np.where(indicator, z, -z)


def lambda_alpha(r2: float, sigma2: float, mean_propensity: float, alpha: float, upper: float = LAMBDA_UPPER) -> float:
    """满足 P(Λ⁻¹ ≤ λ ≤ Λ) ≥ 1 − α 的最小 Λ ≥ 1

    Raises:
        BracketingFailure: Λ 超出 [1, upper]
    """
    if not (0.0 < alpha <= 1.0):
        raise BoundsViolation(f"α 必须在 (0, 1] 内: {alpha}")
    params = LambdaParams.from_budget(r2, sigma2, mean_propensity)
    if r2 == 0.0:
        return 1.0
    target = 1.0 - alpha
    if band_probability(0.0, params) >= target:
        return 1.0
    log_upper = float(np.log(upper))
    if band_probability(log_upper, params) < target:
        raise BracketingFailure(f"Λ_α 超出搜索上界 {upper:g}")
    root = bisect(lambda band: band_probability(band, params) - target, 0.0, log_upper, xtol=1e-12, rtol=1e-15, maxiter=500)
    return float(np.exp(root))


def rv_to_lambda(rv: float, sigma2: float, mean_propensity: float, alpha: float) -> float:
    """把稳健性值换算为 Λ 单位"""
    return lambda_alpha(rv, sigma2, mean_propensity, alpha)


def lambda_to_r2(value: float, sigma2: float, mean_propensity: float, alpha: float) -> float:
    """lambda_alpha 在 r2 上的单调反函数"""
    if value < 1.0:
        raise BoundsViolation(f"Λ 必须不小于 1: {value}")
    if value == 1.0:
        return 0.0
    high = 1.0 - 1e-12
    try:
        if lambda_alpha(high, sigma2, mean_propensity, alpha) < value:
            return high
    except BracketingFailure:
        pass

    def gap(r2: float) -> float:
        try:
            return np.log(lambda_alpha(r2, sigma2, mean_propensity, alpha)) - np.log(value)
        except BracketingFailure:
            return np.inf

    return float(bisect(gap, 0.0, high, xtol=1e-13, maxiter=500))


def _r2(design: np.ndarray, response: np.ndarray) -> float:
    centered = response - response.mean()
    total = float(centered @ centered)
    if total <= 0:
        raise ValidationError("响应变量为常数，R² 无定义")
    coef, *_ = np.linalg.lstsq(design, response, rcond=None)
    resid = response - design @ coef
    return 1.0 - float(resid @ resid) / total


def _as_index(j: IndexSet, p: int) -> List[int]:
    index = [int(j)] if np.isscalar(j) else [int(k) for k in j]
    if not index or any(k < 0 or k >= p for k in index):
        raise BoundsViolation(f"协变量下标越界: {j}")
    return index


def _partial_r2(response: np.ndarray, base: np.ndarray, covariates: np.ndarray, drop: List[int]) -> float:
    full = np.column_stack([base, covariates])
    reduced = np.column_stack([base, np.delete(covariates, drop, axis=1)])
    r2_full = _r2(full, response)
    r2_reduced = _r2(reduced, response)
    if r2_reduced >= 1.0:
        return 0.0
    return float(min(max((r2_full - r2_reduced) / (1.0 - r2_reduced), 0.0), 1.0))


def partial_r2_treatment(d: Dataset, j: IndexSet) -> float:
    """R²_{T∼X_j|X₋ⱼ} = (R²_{T∼X} − R²_{T∼X₋ⱼ}) / (1 − R²_{T∼X₋ⱼ})

    使用最小二乘投影，设计矩阵共线时仍有定义。
    """
    drop = _as_index(j, d.p)
    return _partial_r2(d.treatment, np.ones((d.n, 1)), d.covariates, drop)


def partial_r2_outcome(d: Dataset, a: ContrastLike, j: IndexSet) -> float:
    """R²_{a'Y∼X_j|X₋ⱼ,T}"""
    drop = _as_index(j, d.p)
    response = d.outcomes @ contrast_vector(a, d.q)
    base = np.column_stack([np.ones(d.n), d.treatment])
    return _partial_r2(response, base, d.covariates, drop)


def benchmark_lambda(d: Dataset, pm_full: PropensityModel, pm_reduced: PropensityModel, alpha: float) -> float:
    """Odds(X)/Odds(X₋ⱼ) 双向比值的经验 (1−α) 分位数

    α = 1 时返回最小比值。

    Raises:
        ValidationError: 两个模型不是在同一批样本上拟合的
    """
    if not d.binary_treatment:
        raise NonBinaryTreatment(d.treatment.tolist())
    if not (0.0 < alpha <= 1.0):
        raise BoundsViolation(f"α 必须在 (0, 1] 内: {alpha}")
    same_rows = (
        pm_full.fitted.shape == pm_reduced.fitted.shape == d.treatment.shape
        and np.array_equal(pm_full.treatment, pm_reduced.treatment)
        and np.array_equal(pm_full.treatment, d.treatment)
    )
    if not same_rows:
        raise ValidationError("完整与简化倾向模型必须在同一批样本上拟合")
    ratio = pm_full.odds / pm_reduced.odds
    symmetric = np.maximum(ratio, 1.0 / ratio)
    return float(np.quantile(symmetric, 1.0 - alpha))


def benchmark_table(
    d: Dataset,
    alpha: Optional[float] = None,
    contrasts: Optional[Sequence[ContrastLike]] = None,
    groups: Optional[Sequence[Sequence[int]]] = None,
) -> List[BenchmarkRow]:
    """每个协变量 (或协变量组) 一行的基准表

    Args:
        alpha: 提供时计算 Λ 分位数，要求二值处理
        contrasts: 结局侧对比，默认每个结局的单位对比
        groups: 参考协变量组，默认每个协变量单独一组
    """
    if alpha is not None and not d.binary_treatment:
        raise NonBinaryTreatment(d.treatment.tolist())
    contrasts = list(contrasts) if contrasts is not None else canonical_contrasts(d)
    groups = [list(g) for g in groups] if groups is not None else [[k] for k in range(d.p)]
    full_model = fit_propensity(d) if alpha is not None else None

    rows: List[BenchmarkRow] = []
    for group in groups:
        label = "+".join(d.covariate_names[k] for k in group)
        quantile = None
        if full_model is not None:
            kept = [k for k in range(d.p) if k not in group]
            reduced = fit_propensity(d, covariate_index=kept)
            quantile = benchmark_lambda(d, full_model, reduced, alpha)
        rows.append(
            BenchmarkRow(
                covariate=label,
                partial_r2_treatment=partial_r2_treatment(d, group),
                partial_r2_outcomes=[partial_r2_outcome(d, a, group) for a in contrasts],
                lambda_quantile=quantile,
            )
        )
    logger.info(f"基准表完成: {len(rows)} 行")
    return rows
