"""
工作流测试：节点串联、条件路由与错误记录
"""
import numpy as np
import pytest
from scipy.special import expit

from src.analysis.data_model import Dataset, make_contrast
from src.analysis.errors import BudgetBelowMinimum, NonBinaryTreatment, RankDeficient
from src.analysis.simulation import SimConfig, generate
from src.app import _next_after_robustness, run_analysis, workflow
from src.nodes.base import AnalysisNode
from src.states.state import AnalysisSettings, create_state


@pytest.fixture(scope="module")
def reference_data():
    return generate(SimConfig(n=5000, seed=21, rho=[np.sqrt(0.5), 0.0])).dataset


def binary_dataset(n=1500, seed=4):
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(n)
    x = rng.standard_normal((n, 2))
    t = (rng.random(n) < expit(0.5 * u + x[:, 0])).astype(float)
    loadings = np.array([1.0, 0.8, -0.6, 0.5])
    y = np.outer(t, [0.0, 0.5, 1.0, 0.0]) + np.outer(u, loadings) + x[:, :1] + rng.standard_normal((n, 4))
    return Dataset(
        outcomes=y,
        treatment=t,
        covariates=x,
        outcome_names=("y1", "y2", "y3", "y4"),
        covariate_names=("x1", "x2"),
        binary_treatment=True,
    )


def test_full_analysis_with_null_controls(reference_data):
    settings = AnalysisSettings(rank=2, null_controls=[0], r2_budgets=[0.7, 0.8], benchmarks=False)
    state = run_analysis(reference_data, settings)
    report = state["report"]

    assert state["status"] == "completed"
    assert report.q == 10 and report.n == 5000
    assert report.summary.null_controls == [1]
    assert report.summary.m == 2
    assert 0.3 < report.summary.r2_min < 0.7
    assert len(report.summary.global_bounds) == 2
    assert report.summary.identifiability is not None
    assert report.summary.bootstrap is None

    for outcome in report.outcomes:
        assert outcome.nuc_interval == [outcome.nuc_effect, outcome.nuc_effect]
        assert len(outcome.regions) == 6
        assert set(outcome.width_factors) == {"0.7", "0.8"}
        for r2 in (0.7, 0.8):
            by_mode = {region.mode: region for region in outcome.regions if region.r2_tu == r2}
            factor, extreme, nc = by_mode["factor"], by_mode["extreme"], by_mode["null_control"]
            slack = 1e-9 * max(1.0, abs(factor.center) + factor.halfwidth)
            assert factor.halfwidth <= extreme.halfwidth + slack
            assert nc.lower >= factor.lower - slack
            assert nc.upper <= factor.upper + slack
        assert outcome.robustness.rv_combined is not None

    control = report.outcomes[0]
    nc = next(region for region in control.regions if region.mode == "null_control")
    assert abs(nc.center) < 1e-8 and nc.halfwidth < 1e-8


def test_custom_contrast_is_reported(reference_data):
    weights = np.zeros(10)
    weights[3], weights[4] = 0.6, 0.8
    settings = AnalysisSettings(
        rank=2, r2_budgets=[0.3], benchmarks=False, contrasts=[make_contrast(weights)], standardize=True
    )
    report = run_analysis(reference_data, settings)["report"]
    assert [o.label for o in report.outcomes][-1] == "contrast1"
    assert report.standardized
    assert report.outcomes[0].scale > 0
    assert report.outcomes[-1].scale is None
    assert report.summary.identified_contrasts is not None
    assert len(report.summary.identified_contrasts) == 8


def test_budget_below_minimum_stops_workflow(reference_data):
    settings = AnalysisSettings(rank=2, null_controls=[0], r2_budgets=[0.1], benchmarks=False)
    with pytest.raises(BudgetBelowMinimum):
        run_analysis(reference_data, settings)

    final = workflow.invoke(create_state(reference_data, settings))
    assert final["status"] == "error"
    assert final.get("report") is None
    assert final["errors"][0]["node"] == "null_controls"
    assert final["errors"][0]["exit_code"] == 3


def test_lambda_requires_binary_treatment(reference_data):
    with pytest.raises(NonBinaryTreatment):
        run_analysis(reference_data, AnalysisSettings(rank=2, lambda_alpha=0.05))


def test_regression_failure_is_recorded():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(50)
    d = Dataset(
        outcomes=rng.standard_normal((50, 4)),
        treatment=rng.standard_normal(50),
        covariates=np.column_stack([x, 2.0 * x]),
        outcome_names=("y1", "y2", "y3", "y4"),
    )
    final = workflow.invoke(create_state(d, AnalysisSettings(rank=1)))
    assert final["status"] == "error"
    assert final["errors"][0]["error_type"] == "RankDeficient"
    assert final["errors"][0]["node"] == "regression"
    assert "factor_model" not in final
    with pytest.raises(RankDeficient):
        run_analysis(d, AnalysisSettings(rank=1))


@pytest.mark.parametrize("error", [ZeroDivisionError("除零"), FloatingPointError("溢出")])
def test_arithmetic_errors_are_numeric_failures(error):
    class Failing(AnalysisNode):
        name = "failing"

        def run(self, state):
            raise error

    state = Failing()({"errors": []})
    assert state["status"] == "error"
    assert state["errors"][0]["error_type"] == "NumericFailure"
    assert state["errors"][0]["exit_code"] == 4


def test_binary_treatment_with_calibration():
    settings = AnalysisSettings(rank=1, r2_budgets=[0.2], lambda_alpha=0.05, null_controls=[0])
    report = run_analysis(binary_dataset(), settings)["report"]
    summary = report.summary
    assert 0.0 < summary.mean_propensity < 1.0
    assert [row.covariate for row in summary.benchmarks] == ["x1", "x2"]
    assert all(row.lambda_quantile >= 1.0 for row in summary.benchmarks)
    region = report.outcomes[1].regions[0]
    assert region.lambda_equivalent > 1.0
    assert report.outcomes[1].robustness.lambda_rv_gamma >= 1.0
    assert report.lambda_alpha == 0.05


def test_routing_skips_calibration_without_covariates(reference_data):
    state = create_state(reference_data, AnalysisSettings(rank=2))
    assert _next_after_robustness(state) == "report"
    state = create_state(reference_data, AnalysisSettings(rank=2, bootstrap=10))
    assert _next_after_robustness(state) == "bootstrap"
    state = create_state(binary_dataset(), AnalysisSettings(rank=1, bootstrap=10, replicate=True))
    assert _next_after_robustness(state) == "report"


def test_small_bootstrap():
    data = generate(SimConfig(n=600, seed=8)).dataset
    settings = AnalysisSettings(rank=2, r2_budgets=[0.3], bootstrap=5, seed=1, benchmarks=False)
    report = run_analysis(data, settings)["report"]

    assert report.summary.bootstrap["b"] == 5
    assert {s["name"] for s in report.summary.bootstrap["statistics"]} == {
        "nuc_effect",
        "region_lower",
        "region_upper",
        "robustness_values",
    }
    for outcome in report.outcomes:
        low, high = outcome.nuc_interval
        assert low <= high
        for region in outcome.regions:
            assert region.envelope is not None
            assert region.envelope[0] <= region.envelope[1]
        assert outcome.robustness.conservative

def _region_pairs(first, second):
    for a, b in zip(first.outcomes, second.outcomes):
        assert len(a.regions) == len(b.regions)
        yield a, b


def test_standardized_regions_rescale_to_raw_units(reference_data):
    base = dict(rank=2, r2_budgets=[0.3, 0.6], benchmarks=False)
    raw = run_analysis(reference_data, AnalysisSettings(**base))["report"]
    std = run_analysis(reference_data, AnalysisSettings(standardize=True, **base))["report"]
    for r, s in _region_pairs(raw, std):
        for region_raw, region_std in zip(r.regions, s.regions):
            assert region_std.lower * s.scale == pytest.approx(region_raw.lower, rel=1e-10, abs=1e-12)
            assert region_std.upper * s.scale == pytest.approx(region_raw.upper, rel=1e-10, abs=1e-12)
        assert s.robustness.rv1 == pytest.approx(r.robustness.rv1, rel=1e-10)


def test_results_invariant_to_row_order(reference_data):
    settings = AnalysisSettings(rank=2, null_controls=[0], r2_budgets=[0.7], benchmarks=False)
    order = np.random.default_rng(3).permutation(reference_data.n)
    first = run_analysis(reference_data, settings)["report"]
    second = run_analysis(reference_data.subset_rows(order), settings)["report"]
    assert second.summary.r2_min == pytest.approx(first.summary.r2_min, rel=1e-9)
    for a, b in _region_pairs(first, second):
        for region_a, region_b in zip(a.regions, b.regions):
            assert region_b.mode == region_a.mode
            assert region_b.center == pytest.approx(region_a.center, rel=1e-9, abs=1e-12)
            assert region_b.halfwidth == pytest.approx(region_a.halfwidth, rel=1e-9, abs=1e-12)
        assert b.robustness.rv_gamma == pytest.approx(a.robustness.rv_gamma, rel=1e-9)
        assert b.robustness.rv_combined == pytest.approx(a.robustness.rv_combined, rel=1e-9)


@pytest.mark.slow
def test_envelope_coverage_at_true_budget():
    """真实预算 0.5 下，bootstrap 外包络对每个结局的真实效应覆盖至少 93/100 次"""
    rho = [np.sqrt(0.5), 0.0]
    covered = np.zeros(10, dtype=int)
    for seed in range(100):
        truth = generate(SimConfig(n=1000, seed=500 + seed, rho=rho))
        settings = AnalysisSettings(rank=2, r2_budgets=[0.5], bootstrap=100, seed=seed, n_jobs=-1, benchmarks=False)
        report = run_analysis(truth.dataset, settings)["report"]
        for j in range(10):
            region = next(r for r in report.outcomes[j].regions if r.mode == "factor")
            low, high = region.envelope
            covered[j] += low <= truth.tau_true[j] <= high
    assert covered.min() >= 93, covered
