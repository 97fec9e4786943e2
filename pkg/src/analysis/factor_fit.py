"""
结局残差的秩 m 因子模型：EM 拟合、可识别性诊断、秩选择与载荷膨胀

所有导出量只通过旋转不变的函数 (‖a'Γ‖、奇异值、ΓΓ') 依赖 Γ。
"""
import itertools
import logging
import warnings
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from joblib import Parallel, delayed
from pydantic import BaseModel
from scipy.stats import multivariate_normal

from ..config import CV_FOLDS, DEFAULT_SEED, DELTA_FLOOR_RATIO, EM_MAX_ITER, EM_TOL, N_JOBS, RANK_TOL
from .data_model import ContrastLike, contrast_vector
from .errors import BoundsViolation, ConvergenceFailure, NumericFailure, RotationWarning, ValidationError, ZeroVariance

logger = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class FactorModel:
    """同方差因子模型 Cov(Y | T, X) = ΓΓ' + diag(Δ)"""

    gamma: np.ndarray  # q×m，仅在右旋转意义下可识别
    delta: np.ndarray  # q
    loglik: float
    n_used: int
    loglik_trace: Tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        gamma = np.asarray(self.gamma, dtype=float)
        delta = np.asarray(self.delta, dtype=float).reshape(-1)
        if gamma.ndim != 2 or gamma.shape[0] != delta.shape[0]:
            raise ValidationError(f"载荷矩阵形状 {gamma.shape} 与特殊方差长度 {delta.shape[0]} 不一致")
        if not (np.all(np.isfinite(gamma)) and np.all(np.isfinite(delta))):
            raise NumericFailure("因子模型含有非有限值")
        if np.any(delta < 0):
            raise ValidationError("特殊方差必须非负")
        gamma = gamma.copy()
        delta = delta.copy()
        gamma.setflags(write=False)
        delta.setflags(write=False)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "loglik_trace", tuple(self.loglik_trace))

    @property
    def q(self) -> int:
        return self.gamma.shape[0]

    @property
    def m(self) -> int:
        return self.gamma.shape[1]

    def loading_norm(self, a: ContrastLike) -> float:
        """‖a'Γ‖₂"""
        weights = contrast_vector(a, self.q)
        return float(np.linalg.norm(weights @ self.gamma))

    def implied_variance(self, a: ContrastLike) -> float:
        """模型隐含的 Var(a'Y | T, X) = ‖a'Γ‖² + a'diag(Δ)a"""
        weights = contrast_vector(a, self.q)
        return float(np.sum((weights @ self.gamma) ** 2) + weights ** 2 @ self.delta)

    def gram(self) -> np.ndarray:
        return self.gamma @ self.gamma.T

    def implied_cov(self) -> np.ndarray:
        return self.gram() + np.diag(self.delta)

    def singular_values(self) -> np.ndarray:
        if self.m == 0:
            return np.zeros(0)
        return np.linalg.svd(self.gamma, compute_uv=False)

    def rotate(self, rotation: np.ndarray) -> "FactorModel":
        """返回载荷右乘正交矩阵后的等价模型"""
        return FactorModel(self.gamma @ rotation, self.delta, self.loglik, self.n_used, self.loglik_trace)

    def to_dict(self) -> Dict[str, Any]:
        """JSON 导出 {m, gamma (行优先), delta, loglik, n_used}"""
        warnings.warn("导出的原始载荷矩阵只在右旋转意义下可识别", RotationWarning, stacklevel=2)
        return {
            "m": self.m,
            "gamma": self.gamma.tolist(),
            "delta": self.delta.tolist(),
            "loglik": self.loglik,
            "n_used": self.n_used,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FactorModel":
        q = len(data["delta"])
        gamma = np.asarray(data["gamma"], dtype=float).reshape(q, int(data["m"]))
        return cls(gamma=gamma, delta=np.asarray(data["delta"]), loglik=float(data["loglik"]), n_used=int(data["n_used"]))


class IdentifiabilityReport(BaseModel):
    """因子可识别性诊断"""

    q: int
    m: int
    dimension_ok: bool
    row_deletion_ok: bool
    per_outcome_r2: List[float]


class RankScore(BaseModel):
    """单个秩的拟合评分"""

    m: int
    loglik: float
    n_params: int
    bic: float
    cv_loglik: float
    cv_se: float


def dimension_ok(q: int, m: int) -> bool:
    """(q−m)² − q − m ≥ 0"""
    return (q - m) ** 2 - q - m >= 0


def max_feasible_rank(q: int) -> int:
    m = 0
    while m + 1 <= q and dimension_ok(q, m + 1):
        m += 1
    return m


def n_free_parameters(q: int, m: int) -> int:
    """载荷去掉旋转自由度后的参数数 + 特殊方差"""
    return q * m - m * (m - 1) // 2 + q


def gaussian_loglik(cov: np.ndarray, sample_cov: np.ndarray, n: int) -> float:
    """均值已知为零时，样本协方差为 sample_cov 的高斯对数似然"""
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0:
        raise NumericFailure("模型协方差不是正定矩阵")
    q = cov.shape[0]
    trace = float(np.trace(np.linalg.solve(cov, sample_cov)))
    return -0.5 * n * (q * LOG_2PI + logdet + trace)


def _sample_cov(residuals: np.ndarray) -> np.ndarray:
    cov = np.atleast_2d(np.cov(residuals, rowvar=False))
    if not np.all(np.isfinite(cov)):
        raise NumericFailure("残差协方差含有非有限值")
    return cov


def fit_factor_em(
    residuals: np.ndarray,
    m: int,
    tol: float = EM_TOL,
    max_iter: int = EM_MAX_ITER,
    floor_ratio: float = DELTA_FLOOR_RATIO,
) -> FactorModel:
    """EM 算法拟合高斯因子分析模型

    EM 在相关系数尺度上进行，结果再换回原尺度，因此拟合对结局缩放等变。
    初值为相关阵前 m 个主成分 (特征向量乘以特征值平方根)。

    Args:
        residuals: n×q 结局残差
        m: 因子数，0 ≤ m ≤ q
        tol: 相对对数似然变化的收敛阈值
        max_iter: 最大迭代次数
        floor_ratio: 特殊方差下限占样本方差的比例

    Returns:
        FactorModel，loglik 为原尺度上的对数似然
    """
    residuals = np.asarray(residuals, dtype=float)
    n, q = residuals.shape
    if m < 0 or m > q:
        raise ValidationError(f"因子数 m={m} 必须在 0..{q} 之间")
    if n <= q:
        raise ValidationError(f"样本量 n={n} 必须大于结局数 q={q}")

    sample_cov = _sample_cov(residuals)
    variances = np.diag(sample_cov).copy()
    for j in np.flatnonzero(variances <= 0):
        raise ZeroVariance(int(j))

    if m == 0:
        loglik = gaussian_loglik(np.diag(variances), sample_cov, n)
        return FactorModel(np.zeros((q, 0)), variances, loglik, n, (loglik,))

    scale = np.sqrt(variances)
    corr = sample_cov / np.outer(scale, scale)
    floor = floor_ratio
    log_jacobian = n * float(np.sum(np.log(scale)))

    eigval, eigvec = np.linalg.eigh(corr)
    order = np.argsort(eigval)[::-1][:m]
    loadings = eigvec[:, order] * np.sqrt(np.maximum(eigval[order], 0.0))
    psi = np.maximum(floor, 1.0 - np.sum(loadings ** 2, axis=1))

    trace = [gaussian_loglik(loadings @ loadings.T + np.diag(psi), corr, n)]
    eye = np.eye(m)
    for iteration in range(max_iter):
        sigma = loadings @ loadings.T + np.diag(psi)
        beta = np.linalg.solve(sigma, loadings).T  # m×q
        r_beta = corr @ beta.T  # q×m
        ezz = eye - beta @ loadings + beta @ r_beta
        loadings = np.linalg.solve(ezz, r_beta.T).T
        psi = np.maximum(floor, np.diag(corr) - np.sum(loadings * r_beta, axis=1))

        current = gaussian_loglik(loadings @ loadings.T + np.diag(psi), corr, n)
        previous = trace[-1]
        trace.append(current)
        if current < previous - 1e-8 * abs(previous):
            raise ConvergenceFailure(f"EM 对数似然下降: {previous:.10g} -> {current:.10g}")
        if abs(current - previous) < tol * abs(previous):
            break
    else:
        logger.warning(f"EM 达到最大迭代次数 {max_iter} 仍未满足收敛阈值")

    gamma = loadings * scale[:, None]
    delta = psi * variances
    shifted = tuple(value - log_jacobian for value in trace)
    logger.debug(f"EM 完成: m={m}, 迭代 {len(trace) - 1} 次, loglik={shifted[-1]:.6f}")
    return FactorModel(gamma, delta, shifted[-1], n, shifted)


def _rank(rows: np.ndarray, threshold: float) -> int:
    if rows.shape[0] == 0 or rows.shape[1] == 0:
        return 0
    return int(np.sum(np.linalg.svd(rows, compute_uv=False) > threshold))


def _split_exists(rows: np.ndarray, m: int, threshold: float, exhaustive: bool) -> bool:
    """剩余行能否分为两个互不相交的秩 m 子块

    任何可行划分的一侧都包含一个 m 行的基，因此枚举 m 行子集即可。
    """
    count = rows.shape[0]
    if count < 2 * m or _rank(rows, threshold) < m:
        return False
    if exhaustive:
        candidates = itertools.combinations(range(count), m)
    else:
        candidates = [_greedy_basis(rows, m, threshold)]
    for subset in candidates:
        if subset is None:
            continue
        chosen = list(subset)
        if _rank(rows[chosen], threshold) < m:
            continue
        rest = np.delete(rows, chosen, axis=0)
        if _rank(rest, threshold) == m:
            return True
    return False


def _greedy_basis(rows: np.ndarray, m: int, threshold: float) -> Optional[Tuple[int, ...]]:
    order = np.argsort(-np.linalg.norm(rows, axis=1))
    basis: List[int] = []
    for index in order:
        if _rank(rows[basis + [int(index)]], threshold) == len(basis) + 1:
            basis.append(int(index))
        if len(basis) == m:
            return tuple(basis)
    return None


def check_identifiability(fm: FactorModel, tol: float = RANK_TOL) -> IdentifiabilityReport:
    """因子可识别性诊断

    dimension_ok 检查维数不等式；row_deletion_ok 检查删去任一行后剩余行
    可分为两个秩 m 的不相交子块 (q ≤ 20 穷举，否则贪心构造)。
    """
    q, m = fm.q, fm.m
    r2 = [outcome_r2(fm, np.eye(q)[j]) for j in range(q)]
    if m == 0:
        return IdentifiabilityReport(q=q, m=m, dimension_ok=dimension_ok(q, m), row_deletion_ok=True, per_outcome_r2=r2)

    singular = fm.singular_values()
    threshold = tol * (singular[0] if singular.size else 0.0)
    exhaustive = q <= 20
    row_ok = True
    for j in range(q):
        remaining = np.delete(fm.gamma, j, axis=0)
        if not _split_exists(remaining, m, threshold, exhaustive):
            row_ok = False
            break
    if not row_ok:
        logger.warning(f"拟合载荷不满足行删除可识别条件 (q={q}, m={m})，仅作提示")
    return IdentifiabilityReport(
        q=q, m=m, dimension_ok=dimension_ok(q, m), row_deletion_ok=row_ok, per_outcome_r2=r2
    )


def _heldout_score(residuals: np.ndarray, test_index: np.ndarray, m: int) -> float:
    train = np.delete(residuals, test_index, axis=0)
    test = residuals[test_index]
    model = fit_factor_em(train, m)
    center = train.mean(axis=0)
    return float(np.mean(multivariate_normal.logpdf(test, mean=center, cov=model.implied_cov(), allow_singular=False)))


def select_rank(
    residuals: np.ndarray,
    m_max: int,
    folds: int = CV_FOLDS,
    seed: int = DEFAULT_SEED,
    n_jobs: int = N_JOBS,
) -> Tuple[int, List[RankScore]]:
    """BIC 与 K 折留出似然的秩选择

    返回留出对数似然落在最优值一个标准误内的最小秩。

    Args:
        residuals: n×q 结局残差
        m_max: 最大候选秩，超过维数可行上界时截断并告警
        folds: 折数
        seed: 划分折的随机种子

    Returns:
        (选中的秩, 每个秩的评分表)
    """
    residuals = np.asarray(residuals, dtype=float)
    n, q = residuals.shape
    feasible = max_feasible_rank(q)
    if m_max > feasible:
        logger.warning(f"m_max={m_max} 超过可识别上界 {feasible}，已截断")
        m_max = feasible
    m_max = max(m_max, 0)

    permutation = np.random.default_rng(seed).permutation(n)
    fold_index = np.array_split(permutation, folds)
    jobs = [(m, k) for m in range(m_max + 1) for k in range(folds)]
    scores = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_heldout_score)(residuals, fold_index[k], m) for m, k in jobs
    )
    per_rank = np.asarray(scores).reshape(m_max + 1, folds)

    table: List[RankScore] = []
    for m in range(m_max + 1):
        full = fit_factor_em(residuals, m)
        k = n_free_parameters(q, m)
        cv = per_rank[m]
        table.append(
            RankScore(
                m=m,
                loglik=full.loglik,
                n_params=k,
                bic=-2.0 * full.loglik + k * np.log(n),
                cv_loglik=float(cv.mean()),
                cv_se=float(cv.std(ddof=1) / np.sqrt(folds)) if folds > 1 else 0.0,
            )
        )

    best = max(table, key=lambda row: row.cv_loglik)
    chosen = min(row.m for row in table if row.cv_loglik >= best.cv_loglik - best.cv_se)
    logger.info(f"秩选择完成: m={chosen} (最优留出似然秩 {best.m})")
    return chosen, table


def outcome_r2(fm: FactorModel, a: ContrastLike) -> float:
    """R²_{a'Y∼U|T,X} = ‖a'Γ‖² / (‖a'Γ‖² + a'diag(Δ)a)"""
    weights = contrast_vector(a, fm.q)
    shared = float(np.sum((weights @ fm.gamma) ** 2))
    total = shared + float(weights ** 2 @ fm.delta)
    if total <= 0:
        return 0.0
    return min(max(shared / total, 0.0), 1.0)


def inflate_loadings(fm: FactorModel, d_extra: Sequence[float]) -> FactorModel:
    """把部分特殊方差人为归入混杂因子

    Γ' 为 Γ̂Γ̂' + diag(d) 的下三角 Cholesky 因子 (允许半正定)，Δ' = Δ − d。

    Raises:
        BoundsViolation: d 不满足 0 ≤ d ≤ Δ
    """
    extra = np.asarray(d_extra, dtype=float).reshape(-1)
    if extra.shape[0] != fm.q:
        raise BoundsViolation(f"d_extra 长度 {extra.shape[0]} 与结局数 {fm.q} 不一致")
    if np.any(extra < 0) or np.any(extra > fm.delta):
        raise BoundsViolation("d_extra 必须满足 0 ≤ d ≤ Δ")

    # B B' = Γ̂Γ̂' + D；B' = QR 给出 B B' = R'R，R' 即下三角因子
    factor = np.column_stack([fm.gamma, np.diag(np.sqrt(extra))])
    upper = scipy.linalg.qr(factor.T, mode="r")[0][: fm.q, : fm.q]
    lower = upper.T
    signs = np.sign(np.diag(lower))
    signs[signs == 0] = 1.0
    lower = lower * signs
    delta = np.maximum(fm.delta - extra, 0.0)
    return FactorModel(lower, delta, fm.loglik, fm.n_used, fm.loglik_trace)
