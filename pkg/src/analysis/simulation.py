"""
模拟数据生成与独立的暴力 oracle

生成模型：U ~ N(0, I_m)；T = ρ'U + sqrt(1−‖ρ‖²)·ε_T (+ X κ)，
于是 Var(T^{⊥X}) = 1 且 Cor(T, U) = ρ；Y = τT + ΓΣ^{-1/2}U + ε_Y (+ X θ)，
Σ = I − ρρ'，因此 Cov(Y | T, X) = ΓΓ' + diag(Δ)。
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, model_validator
from scipy.optimize import bisect, minimize

from .data_model import ContrastLike, Dataset, contrast_vector
from .errors import InfeasibleConstraints, ValidationError
from .sensitivity_bounds import confounding_multiplier, inverse_sqrt_sigma

logger = logging.getLogger(__name__)


class SimConfig(BaseModel):
    """模拟配置，默认值复现 q=10、m=2、‖ρ‖²=0.5 的设计"""

    n: int = Field(default=1000, ge=2)
    q: int = Field(default=10, ge=1)
    m: int = Field(default=2, ge=0)
    p: int = Field(default=0, ge=0)
    gamma_true: Optional[List[List[float]]] = None
    tau_true: Optional[List[float]] = None
    rho_norm2: float = Field(default=0.5, ge=0.0, lt=1.0)
    rho: Optional[List[float]] = None
    delta_true: Optional[List[float]] = None
    seed: int = 0
    mediator_mix: float = Field(default=0.0, ge=0.0, le=1.0)
    mediator_strength: float = 0.5
    covariate_effect: float = 0.5

    @model_validator(mode="after")
    def _dimensions(self) -> "SimConfig":
        if self.m > self.q:
            raise ValueError("m 不能大于 q")
        if self.gamma_true is not None and np.shape(self.gamma_true) != (self.q, self.m):
            raise ValueError(f"gamma_true 形状必须为 ({self.q}, {self.m})")
        if self.tau_true is not None and len(self.tau_true) != self.q:
            raise ValueError("tau_true 长度必须为 q")
        if self.delta_true is not None and (len(self.delta_true) != self.q or min(self.delta_true) <= 0):
            raise ValueError("delta_true 必须是长度为 q 的正向量")
        if self.rho is not None:
            if len(self.rho) != self.m:
                raise ValueError("rho 长度必须为 m")
            if float(np.dot(self.rho, self.rho)) >= 1.0:
                raise ValueError("‖ρ‖² 必须小于 1")
        if self.m == 0 and self.rho_norm2 > 0:
            raise ValueError("m = 0 时不存在混杂，rho_norm2 必须为 0")
        return self

    def gamma(self) -> np.ndarray:
        if self.gamma_true is not None:
            return np.asarray(self.gamma_true, dtype=float).reshape(self.q, self.m)
        return default_gamma(self.q, self.m)

    def tau(self) -> np.ndarray:
        if self.tau_true is not None:
            return np.asarray(self.tau_true, dtype=float)
        return default_tau(self.q)

    def delta(self) -> np.ndarray:
        if self.delta_true is not None:
            return np.asarray(self.delta_true, dtype=float)
        return np.ones(self.q)


@dataclass(frozen=True)
class SimTruth:
    """模拟数据及其生成参数"""

    dataset: Dataset
    tau_true: np.ndarray
    gamma_true: np.ndarray
    rho_true: np.ndarray
    sigma2_true: float
    bias_true: np.ndarray  # 每个单位对比在 (t1, t2) = (1, 0) 下的偏差
    delta_true: np.ndarray
    latent: np.ndarray  # n×m 潜变量，仅用于检验

    def truth_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(
            {
                "outcome": list(self.dataset.outcome_names),
                "tau_true": self.tau_true,
                "bias_true": self.bias_true,
                "delta_true": self.delta_true,
            }
        )
        for k in range(self.gamma_true.shape[1]):
            frame[f"gamma_{k + 1}"] = self.gamma_true[:, k]
        for k in range(self.rho_true.shape[0]):
            frame[f"rho_{k + 1}"] = self.rho_true[k]
        frame["sigma2_true"] = self.sigma2_true
        return frame

    def write_csv(self, data_path: str, truth_path: str) -> None:
        """写出数据文件与真值文件"""
        self.dataset.to_frame().to_csv(data_path, index=False, float_format="%.17g")
        self.truth_frame().to_csv(truth_path, index=False, float_format="%.17g")


def read_truth(path: str) -> pd.DataFrame:
    return pd.read_csv(path)


def default_tau(q: int) -> np.ndarray:
    """第 1、2 与最后一个结局无效应，其余为 1"""
    tau = np.ones(q)
    for j in {0, 1, q - 1} & set(range(q)):
        tau[j] = 0.0
    return tau


_DEFAULT_GAMMA_10x2 = np.array(
    [
        [1.0, 0.0],
        [0.6, 0.0],
        [1.4, 0.0],
        [0.0, 1.2],
        [0.0, 0.7],
        [0.0, 0.4],
        [0.6, 0.8],
        [0.4, 0.5],
        [0.9, 0.3],
        [-0.7, 0.6],
    ]
)


def default_gamma(q: int = 10, m: int = 2) -> np.ndarray:
    """默认载荷矩阵

    q=10、m=2 时：第 1–3 行共线，第 4–6 行与第 1 行正交，
    第 7–9 行与第 1 行内积为正，第 10 行为负。
    其他形状使用 Γ_jk = 0.9·cos(π(j+1)(k+1)/(q+1)) 的确定性构造。
    """
    if q == 10 and m == 2:
        return _DEFAULT_GAMMA_10x2.copy()
    j = np.arange(1, q + 1)[:, None]
    k = np.arange(1, m + 1)[None, :]
    return 0.9 * np.cos(np.pi * j * k / (q + 1))


def _sample_rho(rng: np.random.Generator, m: int, norm2: float) -> np.ndarray:
    if m == 0:
        return np.zeros(0)
    direction = rng.standard_normal(m)
    return np.sqrt(norm2) * direction / np.linalg.norm(direction)


def _covariate_block(cfg: SimConfig, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal((cfg.n, cfg.p)) if cfg.p else np.zeros((cfg.n, 0))


def _dataset(cfg: SimConfig, outcomes: np.ndarray, treatment: np.ndarray, covariates: np.ndarray) -> Dataset:
    return Dataset(
        outcomes=outcomes,
        treatment=treatment,
        covariates=covariates,
        outcome_names=tuple(f"y{j + 1}" for j in range(cfg.q)),
        covariate_names=tuple(f"x{k + 1}" for k in range(cfg.p)),
        treatment_name="t",
    )


def true_bias(gamma: np.ndarray, rho: np.ndarray, sigma2: float, dt: float = 1.0) -> np.ndarray:
    """每个单位对比的真实偏差 ΓΣ^{-1/2}ρ · Δt / σ"""
    if rho.size == 0:
        return np.zeros(gamma.shape[0])
    return gamma @ inverse_sqrt_sigma(rho) @ rho * dt / np.sqrt(sigma2)


def generate(cfg: SimConfig) -> SimTruth:
    """按配置生成模拟数据；mediator_mix > 0 时转入 mediator_scenario"""
    if cfg.mediator_mix > 0:
        return mediator_scenario(cfg)

    rng = np.random.default_rng(cfg.seed)
    gamma, tau, delta = cfg.gamma(), cfg.tau(), cfg.delta()
    rho = np.asarray(cfg.rho, dtype=float) if cfg.rho is not None else _sample_rho(rng, cfg.m, cfg.rho_norm2)
    norm2 = float(rho @ rho)

    latent = rng.standard_normal((cfg.n, cfg.m))
    covariates = _covariate_block(cfg, rng)
    treatment = latent @ rho + np.sqrt(1.0 - norm2) * rng.standard_normal(cfg.n)
    treatment = treatment + cfg.covariate_effect * covariates.sum(axis=1)

    loadings = gamma @ inverse_sqrt_sigma(rho) if cfg.m else np.zeros((cfg.q, 0))
    noise = rng.standard_normal((cfg.n, cfg.q)) * np.sqrt(delta)
    outcomes = np.outer(treatment, tau) + latent @ loadings.T + noise
    outcomes = outcomes + cfg.covariate_effect * covariates.sum(axis=1)[:, None]

    sigma2 = 1.0
    return SimTruth(
        dataset=_dataset(cfg, outcomes, treatment, covariates),
        tau_true=tau,
        gamma_true=gamma,
        rho_true=rho,
        sigma2_true=sigma2,
        bias_true=true_bias(gamma, rho, sigma2),
        delta_true=delta,
        latent=latent,
    )


def _random_rotation(rng: np.random.Generator, m: int) -> np.ndarray:
    q_mat, r_mat = np.linalg.qr(rng.standard_normal((m, m)))
    return q_mat * np.sign(np.diag(r_mat))


def mediator_count(mix: float, m: int) -> int:
    """中介因子个数 floor(mix·m + 0.5)，0.5 向上取整"""
    return int(np.floor(mix * m + 0.5))


def mediator_scenario(cfg: SimConfig) -> SimTruth:
    """部分潜变量列为处理之后的中介

    随机旋转后取 k = mediator_count(mediator_mix, m) 列为中介：U₂ = κT + ε，
    其余 r = m − k 列为处理前混杂 U₁，全部混杂预算 ‖ρ₁‖² = rho_norm2 落在 U₁ 上。
    真实总效应包含中介路径 Γ₂κ，真实偏差只来自 U₁ 块。
    """
    if cfg.mediator_mix == 0:
        return generate(cfg)

    rng = np.random.default_rng(cfg.seed)
    gamma, tau, delta = cfg.gamma(), cfg.tau(), cfg.delta()
    rotation = _random_rotation(rng, cfg.m) if cfg.m else np.zeros((0, 0))
    rotated = gamma @ rotation
    k = mediator_count(cfg.mediator_mix, cfg.m)
    r = cfg.m - k
    gamma_pre, gamma_post = rotated[:, :r], rotated[:, r:]

    rho_pre = _sample_rho(rng, r, cfg.rho_norm2) if r else np.zeros(0)
    norm2 = float(rho_pre @ rho_pre)

    latent_pre = rng.standard_normal((cfg.n, r))
    covariates = _covariate_block(cfg, rng)
    treatment = latent_pre @ rho_pre + np.sqrt(1.0 - norm2) * rng.standard_normal(cfg.n)
    treatment = treatment + cfg.covariate_effect * covariates.sum(axis=1)
    latent_post = cfg.mediator_strength * treatment[:, None] + rng.standard_normal((cfg.n, k))

    loadings_pre = gamma_pre @ inverse_sqrt_sigma(rho_pre) if r else np.zeros((cfg.q, 0))
    noise = rng.standard_normal((cfg.n, cfg.q)) * np.sqrt(delta)
    outcomes = np.outer(treatment, tau) + latent_pre @ loadings_pre.T + latent_post @ gamma_post.T + noise
    outcomes = outcomes + cfg.covariate_effect * covariates.sum(axis=1)[:, None]

    total_effect = tau + gamma_post.sum(axis=1) * cfg.mediator_strength
    sigma2 = 1.0
    bias = true_bias(gamma_pre, rho_pre, sigma2) if r else np.zeros(cfg.q)
    rho_full = rotation[:, :r] @ rho_pre if r else np.zeros(cfg.m)
    logger.debug(f"中介情景: 处理前混杂 {r} 列, 中介 {k} 列")
    return SimTruth(
        dataset=_dataset(cfg, outcomes, treatment, covariates),
        tau_true=total_effect,
        gamma_true=gamma,
        rho_true=rho_full,
        sigma2_true=sigma2,
        bias_true=bias,
        delta_true=delta,
        latent=np.column_stack([latent_pre, latent_post]),
    )


def oracle_max_bias(
    gamma: np.ndarray,
    a: ContrastLike,
    r2: float,
    sigma: float,
    dt: float,
    n_samples: int = 10000,
    seed: int = 0,
) -> float:
    """在半径 √r2 的球面上随机取 ρ (外加解析方向 Γ'a)，暴力求最大偏差"""
    gamma = np.asarray(gamma, dtype=float)
    weights = contrast_vector(a, gamma.shape[0])
    m = gamma.shape[1]
    if r2 == 0.0 or m == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    directions = rng.standard_normal((n_samples, m))
    analytic = weights @ gamma
    if np.linalg.norm(analytic) > 0:
        directions = np.vstack([directions, analytic])
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    rhos = np.sqrt(r2) * directions

    coefficient = (1.0 / np.sqrt(1.0 - r2) - 1.0) / r2
    # (I + c ρρ')ρ 按行计算
    transformed = rhos + coefficient * rhos * np.sum(rhos * rhos, axis=1, keepdims=True)
    biases = np.abs(transformed @ analytic) * abs(dt) / sigma
    return float(biases.max())


def _direction_grid(m: int, resolution: int) -> np.ndarray:
    if m == 1:
        return np.array([[1.0], [-1.0]])
    if m == 2:
        angles = np.linspace(0.0, 2.0 * np.pi, resolution, endpoint=False)
        return np.column_stack([np.cos(angles), np.sin(angles)])
    # Fibonacci 球面网格
    index = np.arange(resolution) + 0.5
    polar = np.arccos(1.0 - 2.0 * index / resolution)
    azimuth = np.pi * (1.0 + 5.0 ** 0.5) * index
    return np.column_stack([np.cos(azimuth) * np.sin(polar), np.sin(azimuth) * np.sin(polar), np.cos(polar)])


def oracle_constrained_min(
    gamma: np.ndarray,
    control_rows: Sequence[int],
    tau_c: Sequence[float],
    a: Optional[ContrastLike] = None,
    tau_check: Optional[Sequence[float]] = None,
    nullify_a: bool = False,
    sigma: float = 1.0,
    dt: float = 1.0,
    resolution: int = 24,
    tol: float = 1e-7,
) -> float:
    """在偏差约束下直接数值最小化 ‖ρ‖²

    约束：对照结局 c 的偏差 Γ_cΣ^{-1/2}ρ·Δt/σ 等于 tau_c (对比单位)；
    nullify_a 时还要求 a'τ̌Δt 减去 a 的偏差为零。
    m = 1 时在 (−1, 1) 上二分求解；m = 2, 3 时以方向网格为起点用 SLSQP 细化。

    Raises:
        InfeasibleConstraints: 没有满足约束的 ρ
    """
    gamma = np.asarray(gamma, dtype=float)
    m = gamma.shape[1]
    if m == 0 or m > 3:
        raise ValidationError("oracle 仅支持 1 ≤ m ≤ 3")
    rows = [gamma[list(control_rows)]] if len(control_rows) else []
    targets = [np.asarray(tau_c, dtype=float)] if len(control_rows) else []
    if nullify_a:
        weights = contrast_vector(a, gamma.shape[0])
        rows.append((weights @ gamma)[None, :])
        targets.append(np.array([float(weights @ np.asarray(tau_check, dtype=float)) * dt]))
    if not rows:
        return 0.0
    lhs = np.vstack(rows)
    rhs = np.concatenate(targets)
    if np.allclose(rhs, 0.0):
        return 0.0

    def bias(rho: np.ndarray) -> np.ndarray:
        return lhs @ rho * dt / (sigma * np.sqrt(1.0 - rho @ rho))

    def violation(rho: np.ndarray) -> float:
        return float(np.max(np.abs(bias(rho) - rhs)) / max(1.0, np.max(np.abs(rhs))))

    if m == 1:
        best = None
        for sign in (1.0, -1.0):
            g = lambda r: float(bias(np.array([sign * r]))[0] - rhs[0])
            ends = (g(0.0), g(1.0 - 1e-15))
            if ends[0] * ends[1] > 0:
                continue
            root = bisect(g, 0.0, 1.0 - 1e-15, xtol=1e-15, maxiter=500)
            rho = np.array([sign * root])
            if violation(rho) <= tol and (best is None or root ** 2 < best):
                best = root ** 2
        if best is None:
            raise InfeasibleConstraints("标量情形无可行 ρ")
        return float(best)

    best = None
    constraint = {"type": "eq", "fun": lambda rho: lhs @ rho * dt - sigma * rhs * np.sqrt(max(1.0 - rho @ rho, 0.0))}
    inside = {"type": "ineq", "fun": lambda rho: (1.0 - 1e-9) - rho @ rho}
    for direction in _direction_grid(m, resolution):
        for radius in (0.3, 0.6, 0.9):
            start = radius * direction
            result = minimize(
                lambda rho: float(rho @ rho),
                start,
                jac=lambda rho: 2.0 * rho,
                method="SLSQP",
                constraints=[constraint, inside],
                options={"ftol": 1e-14, "maxiter": 500},
            )
            if not np.all(np.isfinite(result.x)) or result.x @ result.x >= 1.0:
                continue
            if violation(result.x) <= tol:
                value = float(result.x @ result.x)
                if best is None or value < best:
                    best = value
    if best is None:
        raise InfeasibleConstraints("网格上没有满足约束的 ρ")
    return best
