"""
闭式偏差界测试：与暴力 oracle 对照、全局界与可识别对比
"""
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from src.analysis.data_model import SensitivityQuery, TreatmentContrast, make_contrast
from src.analysis.errors import BoundsViolation, ValidationError
from src.analysis.factor_fit import FactorModel
from src.analysis.regression import ObservedFit
from src.analysis.sensitivity_bounds import (
    IgnoranceRegion,
    LoadingGroup,
    bias_at_rho,
    bias_bound,
    confounding_multiplier,
    extreme_bias_bound,
    global_bound,
    hetero_bias_bound,
    identified_contrasts,
    ignorance_region,
    inverse_sqrt_sigma,
)
from src.analysis.simulation import default_gamma, oracle_max_bias


def make_fit(tau_check, sigma2=1.0, residuals=None, seed=0):
    tau_check = np.asarray(tau_check, dtype=float)
    if residuals is None:
        residuals = np.random.default_rng(seed).standard_normal((50, tau_check.size))
    coef = np.vstack([np.zeros(tau_check.size), tau_check])
    return ObservedFit(coef=coef, outcome_residuals=residuals, sigma2=sigma2, treatment_coef=np.zeros(1))


def query(weights, r2, t1=1.0, t2=0.0):
    return SensitivityQuery(contrast=make_contrast(weights), treatment_contrast=TreatmentContrast(t1=t1, t2=t2), r2_tu=r2)


def test_bias_bound_closed_form():
    fm = FactorModel(default_gamma(), np.ones(10), 0.0, 100)
    fit = make_fit(np.ones(10), sigma2=4.0)
    e3 = np.eye(10)[2]
    # Δt/σ · sqrt(R²/(1−R²)) · ‖Γ_3‖ = 2/2 · 1 · 1.4
    assert bias_bound(fm, fit, query(e3, 0.5, t1=2.0)) == pytest.approx(1.4)
    assert confounding_multiplier(0.8) == pytest.approx(2.0)
    with pytest.raises(BoundsViolation):
        confounding_multiplier(1.0)


def test_zero_budget_gives_point_region():
    fm = FactorModel(default_gamma(), np.ones(10), 0.0, 100)
    fit = make_fit(np.arange(10.0))
    for mode in ("factor", "extreme"):
        region = ignorance_region(fm, fit, query(np.eye(10)[4], 0.0), mode=mode)
        assert region.halfwidth == 0.0
        assert region.lower == region.upper == region.center == 4.0


def test_inverse_sqrt_sigma():
    rho = np.array([0.3, -0.5, 0.2])
    root = inverse_sqrt_sigma(rho)
    sigma = np.eye(3) - np.outer(rho, rho)
    np.testing.assert_allclose(root @ sigma @ root, np.eye(3), atol=1e-12)
    with pytest.raises(BoundsViolation):
        inverse_sqrt_sigma(np.array([1.0, 0.0]))


def test_oracle_dominance_and_tightness():
    """随机实例上：暴力最大偏差不超过闭式界，共线 ρ 处取等"""
    rng = np.random.default_rng(20)
    for _ in range(200):
        q, m = int(rng.integers(2, 8)), int(rng.integers(1, 4))
        gamma = rng.normal(size=(q, m))
        a = rng.normal(size=q)
        r2 = float(rng.uniform(0.01, 0.95))
        sigma2 = float(rng.uniform(0.2, 3.0))
        dt = float(rng.uniform(0.5, 2.0))
        fm = FactorModel(gamma, np.ones(q), 0.0, 100)
        fit = make_fit(np.zeros(q), sigma2=sigma2)
        bound = bias_bound(fm, fit, query(a, r2, t1=dt))
        oracle = oracle_max_bias(gamma, a, r2, np.sqrt(sigma2), dt, n_samples=2000, seed=int(rng.integers(1000)))
        assert oracle <= bound + 1e-10 * max(1.0, bound)
        direction = a @ gamma
        rho = np.sqrt(r2) * direction / np.linalg.norm(direction)
        assert bias_at_rho(gamma, a, rho, sigma2, dt) == pytest.approx(bound, rel=1e-10, abs=1e-10)


@given(seed=st.integers(min_value=0, max_value=2**31 - 1))
def test_global_bound_dominates_unit_contrasts(seed):
    rng = np.random.default_rng(seed)
    q, m = int(rng.integers(2, 9)), int(rng.integers(1, 4))
    gamma = rng.normal(size=(q, m))
    fm = FactorModel(gamma, np.ones(q), 0.0, 100)
    fit = make_fit(np.zeros(q), sigma2=float(rng.uniform(0.5, 2.0)))
    tc = TreatmentContrast()
    r2 = float(rng.uniform(0.05, 0.9))
    bound, worst = global_bound(fm, fit, tc, r2)
    contrasts = rng.normal(size=(200, q))
    contrasts /= np.linalg.norm(contrasts, axis=1, keepdims=True)
    for a in contrasts:
        assert bias_bound(fm, fit, query(a, r2)) <= bound * (1 + 1e-12) + 1e-12
    assert np.linalg.norm(worst) == pytest.approx(1.0)
    assert bias_bound(fm, fit, query(worst, r2)) == pytest.approx(bound, rel=1e-8)
    assert worst[np.argmax(np.abs(worst))] > 0


def test_extreme_bound_dominates_factor_bound():
    rng = np.random.default_rng(21)
    for _ in range(50):
        gamma = rng.normal(size=(5, 2))
        delta = rng.uniform(0.1, 2.0, size=5)
        fm = FactorModel(gamma, delta, 0.0, 100)
        fit = make_fit(rng.normal(size=5))
        q_ = query(rng.normal(size=5), float(rng.uniform(0.05, 0.9)))
        assert extreme_bias_bound(fit, q_, fm) >= bias_bound(fm, fit, q_)


def test_extreme_bound_without_model_uses_sample_variance():
    rng = np.random.default_rng(22)
    residuals = rng.normal(size=(100, 3))
    fit = make_fit(np.zeros(3), residuals=residuals)
    a = np.array([1.0, -1.0, 0.5])
    expected = np.sqrt(a @ np.cov(residuals, rowvar=False) @ a)
    assert extreme_bias_bound(fit, query(a, 0.5)) == pytest.approx(expected)


def test_identified_contrasts_span_null_space():
    fm = FactorModel(default_gamma(), np.ones(10), 0.0, 100)
    basis = identified_contrasts(fm)
    assert basis.shape == (10, 8)
    np.testing.assert_allclose(default_gamma().T @ basis, 0.0, atol=1e-10)
    full = FactorModel(np.eye(3), np.ones(3), 0.0, 100)
    with pytest.raises(ValidationError):
        identified_contrasts(full)


def test_hetero_bound_reduces_to_homogeneous():
    gamma = default_gamma()
    fm = FactorModel(gamma, np.ones(10), 0.0, 100)
    fit = make_fit(np.zeros(10), sigma2=1.5)
    a = np.eye(10)[6]
    tc = TreatmentContrast(t1=1.0, t2=0.0)
    group = LoadingGroup(gamma=gamma.tolist(), mu=0.3, weight=1.0)
    hetero = hetero_bias_bound([group], a, tc, 0.4, fit.sigma)
    assert hetero == pytest.approx(bias_bound(fm, fit, query(a, 0.4)))


def test_hetero_bound_with_distinct_arm_loadings():
    gamma = default_gamma()
    groups = [
        LoadingGroup(gamma=gamma.tolist(), gamma_t2=(2 * gamma).tolist(), mu=0.0, weight=0.5),
        LoadingGroup(gamma=gamma.tolist(), mu=1.0, weight=0.5),
    ]
    a = np.eye(10)[0]
    # 0.5·(1·1 + 2·0) + 0.5·(1·0 + 1·1) = 1
    assert hetero_bias_bound(groups, a, TreatmentContrast(), 0.5, 1.0) == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        hetero_bias_bound(groups[:1], a, TreatmentContrast(), 0.5, 1.0)


def test_hetero_bound_two_group_example():
    groups = [
        LoadingGroup(gamma=[[1.0]], mu=0.0, weight=0.5),
        LoadingGroup(gamma=[[2.0]], mu=0.0, weight=0.5),
    ]
    tc = TreatmentContrast(t1=1.0, t2=0.0)
    # 0.5·(1·1 + 1·0) + 0.5·(2·1 + 2·0) = 1.5
    assert hetero_bias_bound(groups, np.array([1.0]), tc, 0.5, 1.0) == pytest.approx(1.5)


def test_region_helpers():
    region = IgnoranceRegion(label="y1", center=1.0, halfwidth=0.5, r2_tu=0.3)
    assert region.contains(1.4)
    assert not region.contains(1.6)
    scaled = region.rescaled(2.0)
    assert (scaled.lower, scaled.upper) == (1.0, 3.0)
    assert region.to_dict()["mode"] == "factor"
