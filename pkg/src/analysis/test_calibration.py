"""
标定测试：Λ 参数化、偏 R² 与基准表
"""
import numpy as np
import pydantic
import pytest
from scipy.special import expit

from src.analysis.calibration import (
    LambdaParams,
    benchmark_lambda,
    benchmark_table,
    lambda_alpha,
    lambda_to_r2,
    partial_r2_outcome,
    partial_r2_treatment,
    sample_log_lambda,
)
from src.analysis.data_model import Dataset
from src.analysis.errors import BoundsViolation, NonBinaryTreatment, ValidationError
from src.analysis.regression import PropensityModel, fit_propensity


def binary_dataset(n=2000, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, 2))
    t = (rng.random(n) < expit(0.8 * x[:, 0] - 0.3 * x[:, 1])).astype(float)
    y = np.column_stack([t + x[:, 0] + rng.standard_normal(n), 0.5 * t - x[:, 1] + rng.standard_normal(n)])
    return Dataset(outcomes=y, treatment=t, covariates=x, outcome_names=("y1", "y2"), binary_treatment=True)


def continuous_dataset(n=5000, seed=1, duplicate=False):
    rng = np.random.default_rng(seed)
    x1 = rng.standard_normal(n)
    x2 = x1.copy() if duplicate else rng.standard_normal(n)
    t = x1 + rng.standard_normal(n)
    y = np.column_stack([t + 2.0 * x2 + rng.standard_normal(n), rng.standard_normal(n)])
    return Dataset(outcomes=y, treatment=t, covariates=np.column_stack([x1, x2]), outcome_names=("y1", "y2"))


@pytest.mark.parametrize("r2", [0.05, 0.1, 0.2, 0.3, 0.5])
@pytest.mark.parametrize("alpha", [0.05, 0.1])
def test_lambda_band_coverage_monte_carlo(r2, alpha):
    sigma2, e = 0.25, 0.4
    value = lambda_alpha(r2, sigma2, e, alpha)
    params = LambdaParams.from_budget(r2, sigma2, e)
    draws = sample_log_lambda(params, 1_000_000, np.random.default_rng(7))
    covered = np.mean(np.abs(draws) <= np.log(value))
    assert covered == pytest.approx(1.0 - alpha, abs=0.01)


def test_lambda_is_one_without_confounding():
    assert lambda_alpha(0.0, 0.25, 0.5, 0.05) == 1.0
    assert lambda_to_r2(1.0, 0.25, 0.5, 0.05) == 0.0


def test_lambda_monotone_and_invertible():
    budgets = [0.02, 0.1, 0.25, 0.4]
    values = [lambda_alpha(r2, 0.25, 0.3, 0.05) for r2 in budgets]
    assert all(b > a for a, b in zip(values, values[1:]))
    for r2, value in zip(budgets, values):
        assert lambda_to_r2(value, 0.25, 0.3, 0.05) == pytest.approx(r2, rel=1e-6)


def test_lambda_params_validation():
    params = LambdaParams.from_budget(0.2, 0.25, 0.5)
    assert params.sigma2_lambda == pytest.approx(2.0 * params.mu_lambda)
    assert params.mu_lambda == pytest.approx(0.2 / (2.0 * 0.25 * 0.8))
    with pytest.raises(pydantic.ValidationError):
        LambdaParams(mu_lambda=1.0, sigma2_lambda=1.0, mean_propensity=0.5)
    with pytest.raises(BoundsViolation):
        LambdaParams.from_budget(1.0, 0.25, 0.5)
    with pytest.raises(BoundsViolation):
        lambda_alpha(0.1, 0.25, 0.5, 0.0)
    with pytest.raises(BoundsViolation):
        lambda_to_r2(0.5, 0.25, 0.5, 0.05)


def test_partial_r2_treatment_recovers_share():
    d = continuous_dataset()
    assert partial_r2_treatment(d, 0) == pytest.approx(0.5, abs=0.03)
    assert partial_r2_treatment(d, 1) == pytest.approx(0.0, abs=0.01)


def test_partial_r2_outcome():
    d = continuous_dataset()
    # y1 = t + 2x2 + ε：给定 t 与 x1 后 x2 解释 4/5 的剩余方差
    assert partial_r2_outcome(d, np.array([1.0, 0.0]), 1) == pytest.approx(0.8, abs=0.03)
    assert partial_r2_outcome(d, np.array([0.0, 1.0]), 1) == pytest.approx(0.0, abs=0.01)


def test_duplicate_covariate_has_zero_partial_r2():
    d = continuous_dataset(duplicate=True)
    assert partial_r2_treatment(d, 0) == pytest.approx(0.0, abs=1e-8)
    assert partial_r2_outcome(d, np.array([1.0, 0.0]), 1) == pytest.approx(0.0, abs=1e-8)
    # 整组去掉后不再为零
    assert partial_r2_treatment(d, [0, 1]) > 0.4


def test_partial_r2_index_out_of_range():
    with pytest.raises(BoundsViolation):
        partial_r2_treatment(continuous_dataset(), 5)


def test_benchmark_table_binary():
    d = binary_dataset()
    rows = benchmark_table(d, alpha=0.1)
    assert [row.covariate for row in rows] == ["x1", "x2"]
    for row in rows:
        assert row.lambda_quantile >= 1.0
        assert len(row.partial_r2_outcomes) == 2
        assert 0.0 <= row.partial_r2_treatment <= 1.0
    # x1 对处理的影响更强
    assert rows[0].lambda_quantile > rows[1].lambda_quantile

    grouped = benchmark_table(d, groups=[[0, 1]])
    assert grouped[0].covariate == "x1+x2"
    assert grouped[0].lambda_quantile is None


def test_benchmark_table_requires_binary_for_lambda():
    d = continuous_dataset()
    with pytest.raises(NonBinaryTreatment):
        benchmark_table(d, alpha=0.1)
    assert len(benchmark_table(d)) == 2


def test_benchmark_lambda_zero_coefficient_reference():
    """参考协变量系数为 0 时两模型 odds 相同，Λ = 1"""
    d = binary_dataset()
    fitted = expit(0.2 + 0.8 * d.covariates[:, 0])
    full = PropensityModel(coef=np.array([0.2, 0.8, 0.0]), fitted=fitted, treatment=d.treatment)
    reduced = PropensityModel(coef=np.array([0.2, 0.8]), fitted=fitted.copy(), treatment=d.treatment)
    for alpha in (0.05, 0.5, 1.0):
        assert benchmark_lambda(d, full, reduced, alpha) == 1.0


def test_benchmark_lambda_rejects_mismatched_models():
    d = binary_dataset()
    full = fit_propensity(d)
    other = PropensityModel(coef=full.coef, fitted=full.fitted, treatment=1.0 - full.treatment)
    with pytest.raises(ValidationError):
        benchmark_lambda(d, full, other, 0.1)
    reduced = fit_propensity(d, covariate_index=[1])
    assert benchmark_lambda(d, full, reduced, 1.0) >= 1.0
    assert benchmark_lambda(d, full, reduced, 0.05) >= benchmark_lambda(d, full, reduced, 0.5)
