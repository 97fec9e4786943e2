"""
因子模型测试：EM 拟合、尺度等变、可识别性与秩选择
"""
import logging

import numpy as np
import pytest

from src.analysis.errors import BoundsViolation, RotationWarning, ValidationError
from src.analysis.factor_fit import (
    FactorModel,
    check_identifiability,
    dimension_ok,
    fit_factor_em,
    inflate_loadings,
    max_feasible_rank,
    n_free_parameters,
    outcome_r2,
    select_rank,
)
from src.analysis.simulation import default_gamma


def _factor_residuals(n, gamma, seed, delta=None):
    rng = np.random.default_rng(seed)
    q, m = gamma.shape
    delta = np.ones(q) if delta is None else np.asarray(delta)
    return rng.standard_normal((n, m)) @ gamma.T + rng.standard_normal((n, q)) * np.sqrt(delta)


def test_dimension_condition():
    assert dimension_ok(10, 2)
    assert dimension_ok(10, 6)
    assert not dimension_ok(10, 7)
    assert max_feasible_rank(10) == 6
    assert max_feasible_rank(3) == 1
    assert n_free_parameters(10, 2) == 10 * 2 - 1 + 10


def test_em_recovers_loading_norms():
    """大样本下 ‖e_j'Γ̂‖ 接近真值 (旋转不变量)"""
    gamma = default_gamma()
    residuals = _factor_residuals(20000, gamma, seed=0)
    fm = fit_factor_em(residuals, 2)
    estimated = np.linalg.norm(fm.gamma, axis=1)
    np.testing.assert_allclose(estimated, np.linalg.norm(gamma, axis=1), rtol=0.05, atol=0.02)
    np.testing.assert_allclose(fm.gram(), gamma @ gamma.T, atol=0.08)


def test_em_loglik_is_monotone():
    residuals = _factor_residuals(500, default_gamma(), seed=1)
    fm = fit_factor_em(residuals, 2)
    trace = np.asarray(fm.loglik_trace)
    assert trace.size >= 2
    assert np.all(np.diff(trace) >= -1e-8 * np.abs(trace[:-1]))
    assert fm.loglik == trace[-1]


def test_em_is_scale_equivariant():
    residuals = _factor_residuals(800, default_gamma(), seed=2)
    scale = np.linspace(0.5, 5.0, 10)
    base = fit_factor_em(residuals, 2)
    scaled = fit_factor_em(residuals * scale, 2)
    np.testing.assert_allclose(np.linalg.norm(scaled.gamma, axis=1), scale * np.linalg.norm(base.gamma, axis=1), rtol=1e-6)
    np.testing.assert_allclose(scaled.delta, scale ** 2 * base.delta, rtol=1e-6)
    shift = residuals.shape[0] * np.sum(np.log(scale))
    assert scaled.loglik == pytest.approx(base.loglik - shift, rel=1e-8)


def test_em_zero_rank_is_diagonal():
    residuals = _factor_residuals(300, default_gamma(), seed=3)
    fm = fit_factor_em(residuals, 0)
    assert fm.gamma.shape == (10, 0)
    np.testing.assert_allclose(fm.delta, np.var(residuals, axis=0, ddof=1))


def test_em_rejects_bad_rank():
    residuals = _factor_residuals(100, default_gamma(), seed=4)
    with pytest.raises(ValidationError):
        fit_factor_em(residuals, 11)


def test_em_delta_floor():
    """一个结局几乎完全由因子决定时，特殊方差停在下限而不是变为负数"""
    gamma = default_gamma()
    residuals = _factor_residuals(2000, gamma, seed=5, delta=[1e-10] + [1.0] * 9)
    fm = fit_factor_em(residuals, 2)
    assert np.all(fm.delta > 0)


def test_identifiability_default_design():
    fm = FactorModel(default_gamma(), np.ones(10), 0.0, 100)
    report = check_identifiability(fm)
    assert report.dimension_ok
    assert report.row_deletion_ok
    assert len(report.per_outcome_r2) == 10
    assert report.per_outcome_r2[0] == pytest.approx(0.5)


def test_identifiability_row_deletion_failure():
    """只有一行载荷在第二个因子上，删去任意行后无法分出两个秩 2 子块"""
    gamma = np.array([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    report = check_identifiability(FactorModel(gamma, np.ones(5), 0.0, 100))
    assert report.dimension_ok
    assert not report.row_deletion_ok


def test_select_rank_recovers_two_factors():
    residuals = _factor_residuals(2000, default_gamma(), seed=6)
    m, table = select_rank(residuals, 3, seed=0)
    assert m == 2
    assert [row.m for row in table] == [0, 1, 2, 3]
    assert table[2].bic < table[0].bic


def test_select_rank_diagonal_covariance_gives_zero():
    rng = np.random.default_rng(11)
    residuals = rng.standard_normal((2000, 6)) * np.array([0.5, 1.0, 2.0, 1.5, 0.8, 3.0])
    m, table = select_rank(residuals, 2, seed=0)
    assert m == 0
    assert table[0].bic < table[1].bic


def test_select_rank_clips_m_max(caplog):
    rng = np.random.default_rng(7)
    residuals = rng.standard_normal((200, 3))
    with caplog.at_level(logging.WARNING):
        m, table = select_rank(residuals, 5, folds=3)
    assert len(table) == 2
    assert m in (0, 1)
    assert "截断" in caplog.text


@pytest.mark.slow
def test_select_rank_monte_carlo():
    hits = 0
    for seed in range(50):
        residuals = _factor_residuals(2000, default_gamma(), seed=100 + seed)
        m, _ = select_rank(residuals, 3, seed=seed)
        hits += m == 2
    assert hits >= 45


def test_inflate_loadings_preserves_covariance():
    fm = FactorModel(default_gamma(), np.full(10, 0.8), 0.0, 100)
    extra = np.linspace(0.0, 0.5, 10)
    inflated = inflate_loadings(fm, extra)
    np.testing.assert_allclose(inflated.implied_cov(), fm.implied_cov(), atol=1e-10)
    assert inflated.gamma.shape == (10, 10)
    np.testing.assert_allclose(np.triu(inflated.gamma, 1), 0.0, atol=1e-12)
    np.testing.assert_allclose(inflated.delta, fm.delta - extra)
    with pytest.raises(BoundsViolation):
        inflate_loadings(fm, np.full(10, 0.9))


def test_outcome_r2_and_export():
    fm = FactorModel(default_gamma(), np.ones(10), -1.0, 50)
    assert 0.0 <= outcome_r2(fm, np.ones(10)) <= 1.0
    with pytest.warns(RotationWarning):
        data = fm.to_dict()
    restored = FactorModel.from_dict(data)
    np.testing.assert_array_equal(restored.gamma, fm.gamma)
    assert restored.n_used == 50
    rotation = np.array([[0.0, -1.0], [1.0, 0.0]])
    np.testing.assert_allclose(fm.rotate(rotation).gram(), fm.gram())
