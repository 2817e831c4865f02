import json

import numpy as np
import pytest

from robato import DgpConfig, EstimatorVariant, Gaussian, PipelineConfig
from robato.benchmark import BenchmarkConfig, run_benchmark
from robato.errors import NumericError


def tiny_config(**kw):
    base = dict(
        dgp=DgpConfig(theta_true=1.0, n=200, p=5, s=2, coef_magnitude=1.0,
                      noise=Gaussian(0.5), propensity_strength=0.5, seed=0),
        pipeline=PipelineConfig(k_folds=4, gamma=0.5,
                                penalty=__import__("robato").PenaltyConfig(
                                    gamma_pen=10.0, n_lambda=12)),
        variants=(EstimatorVariant.STANDARD_DML, EstimatorVariant.UNIFIED),
        contamination_rates=(0.0, 0.1),
        contamination_magnitude=8.0,
        n_reps=4,
        seed=7,
    )
    base.update(kw)
    return BenchmarkConfig(**base)


def test_benchmark_outputs_and_determinism(tmp_path):
    config = tiny_config()
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    run_benchmark(config, str(out_a))
    run_benchmark(config, str(out_b))
    for name in ("benchmark.csv", "benchmark.json", "summary.txt"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()
    header = (out_a / "benchmark.csv").read_text().splitlines()[0]
    assert header == ("variant,mechanism,rate,n_runs,n_failed,bias,rmse,coverage,"
                      "median_abs_error,mean_ess")
    payload = json.loads((out_a / "benchmark.json").read_text())
    assert len(payload["cells"]) == 4  # 2 variants x 2 rates
    for cell in payload["cells"]:
        assert cell["n_runs"] == 4 and cell["n_failed"] == 0
        assert np.isfinite(cell["bias"]) and np.isfinite(cell["rmse"])
    summary = (out_a / "summary.txt").read_text()
    assert "standard_dml" in summary and "unified" in summary


def test_benchmark_runs_without_output_dir():
    report = run_benchmark(tiny_config(n_reps=2, contamination_rates=(0.0,)))
    assert report.csv_path is None
    assert len(report.cells) == 2


def test_partial_failures_are_recorded(monkeypatch):
    import robato.benchmark as bench

    real = bench.estimate_ato

    def flaky(data, config):
        if config.estimator_variant is EstimatorVariant.UNIFIED:
            raise NumericError("injected failure")
        return real(data, config)

    monkeypatch.setattr(bench, "estimate_ato", flaky)
    report = run_benchmark(tiny_config(n_reps=3, contamination_rates=(0.0,)))
    by_variant = {c.variant: c for c in report.cells}
    assert by_variant["unified"].n_failed == 3
    assert np.isnan(by_variant["unified"].bias)
    assert by_variant["standard_dml"].n_failed == 0


def test_clean_cell_variants_are_unbiased():
    config = tiny_config(
        dgp=DgpConfig(theta_true=1.0, n=500, p=6, s=3, coef_magnitude=1.0,
                      noise=Gaussian(0.5), propensity_strength=0.5, seed=0),
        variants=tuple(EstimatorVariant),
        contamination_rates=(0.0,),
        n_reps=50,
        seed=3,
    )
    report = run_benchmark(config)
    for cell in report.cells:
        mc_se = cell.rmse / np.sqrt(cell.n_runs - cell.n_failed)
        assert abs(cell.bias) < 2 * mc_se, cell.variant


def test_contaminated_benchmark_shows_robustness_gap():
    # treatment-correlated outcome shifts: the convex-loss arm absorbs the
    # full bias while the robust arm sheds it
    config = BenchmarkConfig(
        dgp=DgpConfig(theta_true=2.0, n=2000, p=10, s=3, coef_magnitude=1.0,
                      noise=Gaussian(1.0), propensity_strength=0.5, seed=0),
        pipeline=PipelineConfig(k_folds=5, gamma=0.5),
        variants=(EstimatorVariant.STANDARD_DML, EstimatorVariant.UNIFIED),
        mechanism="outcome_shift",
        contamination_rates=(0.1,),
        contamination_magnitude=10.0,
        contamination_treated_only=True,
        n_reps=200,
        seed=11,
    )
    report = run_benchmark(config)
    by_variant = {c.variant: c for c in report.cells}
    theta0 = 2.0
    assert abs(by_variant["unified"].bias) < 0.1 * theta0
    assert abs(by_variant["standard_dml"].bias) > 0.3 * theta0
    assert by_variant["unified"].rmse < by_variant["standard_dml"].rmse
