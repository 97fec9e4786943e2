"""
观测数据回归与倾向得分测试
"""
import numpy as np
import pytest

from src.analysis.data_model import Dataset, SensitivityQuery, TreatmentContrast, make_contrast
from src.analysis.errors import NonBinaryTreatment, PerfectSeparation, RankDeficient, SingleClass
from src.analysis.factor_fit import FactorModel
from src.analysis.regression import fit_observed, fit_propensity
from src.analysis.sensitivity_bounds import ignorance_region


def _linear_data(n=400, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 2))
    t = 0.5 * x[:, 0] + rng.normal(size=n)
    y1 = 1.0 + 2.0 * t + 3.0 * x[:, 0] - x[:, 1] + 0.1 * rng.normal(size=n)
    y2 = -1.0 * t + 0.5 * x[:, 1] + 0.1 * rng.normal(size=n)
    return Dataset(outcomes=np.column_stack([y1, y2]), treatment=t, covariates=x, outcome_names=("y1", "y2"))


def test_fit_observed_recovers_coefficients():
    d = _linear_data()
    fit = fit_observed(d)
    np.testing.assert_allclose(fit.tau_check, [2.0, -1.0], atol=0.05)
    np.testing.assert_allclose(fit.coef[2], [3.0, 0.0], atol=0.05)
    assert fit.outcome_residuals.shape == (d.n, 2)
    np.testing.assert_allclose(fit.outcome_residuals.mean(axis=0), 0.0, atol=1e-10)


def test_treatment_residual_variance():
    """σ² = RSS(T ~ 1 + X) / (n − p − 1)"""
    d = _linear_data(seed=1)
    fit = fit_observed(d)
    design = np.column_stack([np.ones(d.n), d.covariates])
    coef, *_ = np.linalg.lstsq(design, d.treatment, rcond=None)
    resid = d.treatment - design @ coef
    assert fit.sigma2 == pytest.approx(resid @ resid / (d.n - d.p - 1), rel=1e-12)


def test_contrast_effect_scales_with_treatment_levels():
    fit = fit_observed(_linear_data(seed=2))
    a = make_contrast([1.0, 1.0])
    unit = fit.contrast_effect(a, TreatmentContrast())
    assert fit.contrast_effect(a, TreatmentContrast(t1=3.0, t2=0.5)) == pytest.approx(2.5 * unit)
    assert fit.contrast_effect(a, TreatmentContrast(t1=0.0, t2=1.0)) == pytest.approx(-unit)


def test_collinear_covariate_is_named():
    rng = np.random.default_rng(3)
    x = rng.normal(size=50)
    d = Dataset(
        outcomes=rng.normal(size=(50, 2)),
        treatment=rng.normal(size=50),
        covariates=np.column_stack([x, 2.0 * x]),
        outcome_names=("a", "b"),
        covariate_names=("x1", "x2"),
    )
    with pytest.raises(RankDeficient) as info:
        fit_observed(d)
    assert "x2" in str(info.value)


def test_treatment_explained_by_covariates():
    rng = np.random.default_rng(4)
    x = rng.normal(size=30)
    d = Dataset(outcomes=rng.normal(size=(30, 2)), treatment=1.0 + x, covariates=x, outcome_names=("a", "b"))
    with pytest.raises(RankDeficient):
        fit_observed(d)


def _binary_data(n=5000, seed=5, separate=False):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 1))
    if separate:
        t = (x[:, 0] > 0).astype(float)
    else:
        t = (rng.random(n) < 1.0 / (1.0 + np.exp(-(-0.5 + 1.0 * x[:, 0])))).astype(float)
    return Dataset(outcomes=rng.normal(size=(n, 2)), treatment=t, covariates=x, outcome_names=("a", "b"), binary_treatment=True)


def test_fit_propensity_recovers_logistic_coefficients():
    pm = fit_propensity(_binary_data())
    np.testing.assert_allclose(pm.coef, [-0.5, 1.0], atol=0.15)
    assert np.all((pm.fitted > 0) & (pm.fitted < 1))
    assert pm.mean_propensity == pytest.approx(_binary_data().treatment.mean(), abs=1e-6)


def test_perfect_separation():
    with pytest.raises(PerfectSeparation) as info:
        fit_propensity(_binary_data(n=200, separate=True))
    assert info.value.exit_code == 4


def test_propensity_requires_binary_treatment():
    d = _linear_data()
    with pytest.raises(NonBinaryTreatment):
        fit_propensity(d)


def test_single_class():
    rng = np.random.default_rng(6)
    d = Dataset(outcomes=rng.normal(size=(20, 2)), treatment=np.ones(20), covariates=rng.normal(size=(20, 1)), outcome_names=("a", "b"), binary_treatment=True)
    with pytest.raises(SingleClass):
        fit_propensity(d)


def test_noiseless_linear_outcome():
    rng = np.random.default_rng(7)
    x = rng.normal(size=20)
    t = rng.normal(size=20)
    d = Dataset(outcomes=2.0 * t + 3.0 * x, treatment=t, covariates=x, outcome_names=("y",))
    fit = fit_observed(d)
    assert fit.tau_check[0] == pytest.approx(2.0, abs=1e-10)
    np.testing.assert_allclose(fit.outcome_residuals, 0.0, atol=1e-10)


def test_coefficients_match_normal_equations():
    rng = np.random.default_rng(8)
    x = rng.normal(size=5)
    t = rng.normal(size=5)
    y = rng.normal(size=(5, 3))
    d = Dataset(outcomes=y, treatment=t, covariates=x, outcome_names=("a", "b", "c"))
    design = np.column_stack([np.ones(5), t, x])
    expected = np.linalg.inv(design.T @ design) @ design.T @ y
    np.testing.assert_allclose(fit_observed(d).coef, expected, atol=1e-10)


@pytest.mark.parametrize("shift, scale", [(5.0, 1.0), (-3.0, 2.5), (0.0, 0.1)])
def test_affine_treatment_rescaling(shift, scale):
    """T → cT + s：τ̌/c、σ²c²，残差与同一处理水平下的区间不变"""
    d = _linear_data(seed=9)
    moved = Dataset(
        outcomes=d.outcomes, treatment=scale * d.treatment + shift, covariates=d.covariates, outcome_names=d.outcome_names
    )
    fit, fit_moved = fit_observed(d), fit_observed(moved)
    np.testing.assert_allclose(fit_moved.tau_check, fit.tau_check / scale, rtol=1e-10)
    assert fit_moved.sigma2 == pytest.approx(fit.sigma2 * scale ** 2, rel=1e-10)
    np.testing.assert_allclose(fit_moved.outcome_residuals, fit.outcome_residuals, atol=1e-10)

    fm = FactorModel(np.array([[0.8], [-0.4]]), np.array([0.5, 0.7]), 0.0, d.n)
    a = make_contrast([1.0, 0.5], "a")
    before = ignorance_region(
        fm, fit, SensitivityQuery(contrast=a, treatment_contrast=TreatmentContrast(t1=1.0, t2=-0.5), r2_tu=0.4)
    )
    moved_tc = TreatmentContrast(t1=scale * 1.0 + shift, t2=scale * -0.5 + shift)
    after = ignorance_region(fm, fit_moved, SensitivityQuery(contrast=a, treatment_contrast=moved_tc, r2_tu=0.4))
    assert after.center == pytest.approx(before.center, rel=1e-10)
    assert after.halfwidth == pytest.approx(before.halfwidth, rel=1e-10)


def test_null_propensity_model():
    """T 与 X 独立时拟合值接近 mean(T)"""
    rng = np.random.default_rng(10)
    n = 20000
    x = rng.normal(size=(n, 1))
    t = (rng.random(n) < 0.5).astype(float)
    d = Dataset(outcomes=rng.normal(size=(n, 2)), treatment=t, covariates=x, outcome_names=("a", "b"), binary_treatment=True)
    pm = fit_propensity(d)
    assert np.max(np.abs(pm.fitted - t.mean())) < 0.05


def test_two_point_logistic_mle():
    """二值协变量的 MLE 有闭式解，并且不劣于网格上的任意点"""
    x = np.repeat([0.0, 1.0], [40, 60])
    t = np.concatenate([np.repeat([1.0, 0.0], [10, 30]), np.repeat([1.0, 0.0], [45, 15])])
    rng = np.random.default_rng(11)
    d = Dataset(outcomes=rng.normal(size=(100, 2)), treatment=t, covariates=x, outcome_names=("a", "b"), binary_treatment=True)
    pm = fit_propensity(d)
    np.testing.assert_allclose(pm.coef, [np.log(10 / 30), np.log(9.0)], atol=1e-6)

    def loglik(b0, b1):
        eta = b0 + b1 * x
        return float(np.sum(t * eta - np.logaddexp(0.0, eta)))

    grid = np.linspace(-3.0, 4.0, 141)
    best = max(loglik(b0, b1) for b0 in grid for b1 in grid)
    assert loglik(*pm.coef) >= best - 1e-12
