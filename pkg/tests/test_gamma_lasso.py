import numpy as np
import pytest

from robato import DataError, DgpConfig, generate_dataset
from robato.errors import ConfigError
from robato.gamma_lasso import (
    PROPENSITY_CLIP,
    CvRule,
    Family,
    PenaltyConfig,
    RegressionPath,
    cross_validate,
    fit_path,
    fit_propensity,
    penalty_weights,
    select_lambda,
)


def naive_lasso_cd(x, y, lam, pen_weights, n_sweeps=5000, tol=1e-12):
    """From-scratch reference: cyclic CD on standardized columns, then
    de-standardized. Mirrors the documented model (intercept unpenalized,
    objective (1/2n)||y - b0 - X b||^2 + lam * sum w_j |b_j|)."""
    n, p = x.shape
    mean, sd = x.mean(axis=0), x.std(axis=0)
    xs = (x - mean) / sd
    beta = np.zeros(p)
    b0 = y.mean()
    for _ in range(n_sweeps):
        delta = 0.0
        r = y - b0 - xs @ beta
        shift = r.mean()
        b0 += shift
        delta = abs(shift)
        for j in range(p):
            r = y - b0 - xs @ beta
            rho = xs[:, j] @ r / n + beta[j]
            t = lam * pen_weights[j]
            new = np.sign(rho) * max(abs(rho) - t, 0.0)
            delta = max(delta, abs(new - beta[j]))
            beta[j] = new
        if delta < tol:
            break
    slopes = beta / sd
    return np.concatenate([[b0 - slopes @ mean], slopes])


def orthonormal_design(n, p, seed):
    """Zero-mean columns with population sd exactly 1 and X'X = n I."""
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((n, p))
    raw -= raw.mean(axis=0)
    q, _ = np.linalg.qr(raw)
    return q * np.sqrt(n)


def test_zero_gamma_pen_matches_from_scratch_lasso():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((20, 5))
    y = x @ np.array([1.0, -2.0, 0.0, 0.0, 0.5]) + 0.3 * rng.standard_normal(20)
    config = PenaltyConfig(gamma_pen=0.0, n_lambda=8, lambda_min_ratio=0.05, tol=1e-12)
    path = fit_path(x, y, Family.SQUARED_ERROR, config)
    for t, lam in enumerate(path.lambdas):
        oracle = naive_lasso_cd(x, y, lam, np.ones(5))
        assert np.max(np.abs(path.coefficients[t] - oracle)) < 1e-8


def test_orthonormal_soft_threshold_oracle():
    n, p = 60, 4
    x = orthonormal_design(n, p, seed=1)
    rng = np.random.default_rng(2)
    y = x @ np.array([2.0, -1.0, 0.3, 0.0]) + 0.2 * rng.standard_normal(n)
    beta_ols = x.T @ (y - y.mean()) / n
    lam_big = 10.0 * np.max(np.abs(beta_ols))
    lam1, lam2 = 0.5, 0.2
    gamma_pen = 4.0
    config = PenaltyConfig(gamma_pen=gamma_pen, tol=1e-13)
    path = fit_path(x, y, Family.SQUARED_ERROR, config, lambdas=np.array([lam_big, lam1, lam2]))

    soft = lambda v, t: np.sign(v) * np.maximum(np.abs(v) - t, 0.0)
    # previous solution at lam_big is null, so lam1 is a plain L1 step
    np.testing.assert_allclose(path.coefficients[1, 1:], soft(beta_ols, lam1), atol=1e-10)
    # lam2 uses the one-step reweighted threshold lam2 / (1 + gamma |beta_prev|)
    w = penalty_weights(soft(beta_ols, lam1), gamma_pen)
    np.testing.assert_allclose(path.coefficients[2, 1:], soft(beta_ols, lam2 * w), atol=1e-10)


def test_zero_target_gives_null_path():
    x = np.random.default_rng(3).standard_normal((30, 4))
    path = fit_path(x, np.zeros(30), Family.SQUARED_ERROR, PenaltyConfig(n_lambda=5))
    np.testing.assert_array_equal(path.coefficients, 0.0)


def test_largest_lambda_is_exactly_null():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((50, 6))
    y = x[:, 0] + rng.standard_normal(50)
    path = fit_path(x, y, Family.SQUARED_ERROR, PenaltyConfig(n_lambda=10))
    np.testing.assert_array_equal(path.coefficients[0, 1:], 0.0)


def test_support_monotone_on_orthonormal_design():
    x = orthonormal_design(80, 6, seed=5)
    y = x @ np.array([3.0, 2.0, 1.0, 0.5, 0.0, 0.0]) + 0.1 * np.random.default_rng(6).standard_normal(80)
    path = fit_path(x, y, Family.SQUARED_ERROR, PenaltyConfig(gamma_pen=2.0, n_lambda=12))
    sizes = [int(np.count_nonzero(row[1:])) for row in path.coefficients]
    assert sizes == sorted(sizes)


def test_penalty_weights_diminish():
    betas = np.array([0.0, 0.5, 2.0, 100.0, 1e8])
    w = penalty_weights(betas, gamma_pen=10.0)
    assert np.all(np.diff(w) < 0) and w[0] == 1.0 and w[-1] < 1e-8


def _penalized_objective(x, y, coef, lam, pen_w):
    n = x.shape[0]
    mean, sd = x.mean(axis=0), x.std(axis=0)
    slopes_std = coef[1:] * sd
    resid = y - coef[0] - x @ coef[1:]
    return 0.5 * np.mean(resid**2) + lam * float(pen_w @ np.abs(slopes_std))


def test_coordinate_descent_never_increases_objective():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((40, 8))
    y = x @ rng.standard_normal(8) + rng.standard_normal(40)
    config = PenaltyConfig(gamma_pen=3.0, n_lambda=10, tol=1e-10)
    path = fit_path(x, y, Family.SQUARED_ERROR, config)
    prev = np.zeros(8)
    for t, lam in enumerate(path.lambdas):
        w = penalty_weights(prev, config.gamma_pen)
        here = _penalized_objective(x, y, path.coefficients[t], lam, w)
        if t > 0:
            warm = _penalized_objective(x, y, path.coefficients[t - 1], lam, w)
            assert here <= warm + 1e-12
        sd = x.std(axis=0)
        prev = path.coefficients[t, 1:] * sd
    assert np.isfinite(here)


def test_constant_column_coefficient_pinned_to_zero():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((30, 3))
    x[:, 1] = 2.5
    y = x[:, 0] + 0.1 * rng.standard_normal(30)
    path = fit_path(x, y, Family.SQUARED_ERROR, PenaltyConfig(n_lambda=6))
    np.testing.assert_array_equal(path.coefficients[:, 2], 0.0)


def test_non_convergence_is_flagged_but_returned():
    rng = np.random.default_rng(9)
    x = rng.standard_normal((50, 10))
    y = x @ rng.standard_normal(10)
    config = PenaltyConfig(n_lambda=6, max_iter=1, tol=1e-15)
    path = fit_path(x, y, Family.SQUARED_ERROR, config)
    assert path.coefficients.shape == (6, 11)
    assert not path.converged.all()


def test_logistic_path_recovers_signal_direction():
    rng = np.random.default_rng(10)
    x = rng.standard_normal((400, 5))
    p_true = 1.0 / (1.0 + np.exp(-(1.5 * x[:, 0] - 1.0 * x[:, 1])))
    d = (rng.random(400) < p_true).astype(float)
    path = fit_path(x, d, Family.LOGISTIC, PenaltyConfig(n_lambda=20))
    coef = path.coefficients[-1]
    assert coef[1] > 0.5 and coef[2] < -0.25
    prob = path.predict(x, path.n_lambda - 1)
    assert np.sqrt(np.mean((prob - p_true) ** 2)) < 0.12


def test_logistic_requires_binary_target():
    x = np.random.default_rng(11).standard_normal((20, 2))
    with pytest.raises(DataError):
        fit_path(x, np.linspace(0, 1, 20), Family.LOGISTIC, PenaltyConfig())


# ---------------------------------------------------------------------------
# cross-validation and selection
# ---------------------------------------------------------------------------


def test_loo_cv_matches_direct_computation():
    # leave-one-out with a grid whose top lambda nulls every fold model:
    # the null-point cv error is the squared deviation from fold means
    rng = np.random.default_rng(12)
    x = rng.standard_normal((10, 2))
    y = rng.standard_normal(10)
    lambdas = np.array([1e6, 1e-4])
    config = PenaltyConfig(n_lambda=2, tol=1e-12)
    path = cross_validate(x, y, Family.SQUARED_ERROR, config, k_folds=10, seed=0,
                          fold_id=np.arange(10), lambdas=lambdas)
    loo = np.array([(y[i] - np.delete(y, i).mean()) ** 2 for i in range(10)])
    np.testing.assert_allclose(path.cv_mean[0], loo.mean(), atol=1e-12)
    np.testing.assert_allclose(path.cv_se[0], np.std(loo, ddof=1) / np.sqrt(10), atol=1e-12)


def test_duplicated_dataset_fold_symmetry():
    rng = np.random.default_rng(13)
    x1 = rng.standard_normal((15, 3))
    y1 = x1 @ np.array([1.0, 0.0, -1.0]) + rng.standard_normal(15)
    x = np.vstack([x1, x1])
    y = np.concatenate([y1, y1])
    fold_id = np.concatenate([np.zeros(15, dtype=int), np.ones(15, dtype=int)])
    path = cross_validate(x, y, Family.SQUARED_ERROR, PenaltyConfig(n_lambda=8),
                          k_folds=2, seed=0, fold_id=fold_id)
    np.testing.assert_allclose(path.cv_se, 0.0, atol=1e-15)


def test_cross_validate_deterministic():
    rng = np.random.default_rng(14)
    x = rng.standard_normal((60, 4))
    y = x[:, 0] + rng.standard_normal(60)
    a = cross_validate(x, y, Family.SQUARED_ERROR, PenaltyConfig(n_lambda=10), 5, seed=3)
    b = cross_validate(x, y, Family.SQUARED_ERROR, PenaltyConfig(n_lambda=10), 5, seed=3)
    np.testing.assert_array_equal(a.cv_mean, b.cv_mean)
    np.testing.assert_array_equal(a.cv_se, b.cv_se)


def _dummy_path(cv_mean, cv_se):
    k = len(cv_mean)
    path = RegressionPath(
        lambdas=np.geomspace(1.0, 0.01, k),
        coefficients=np.zeros((k, 2)),
        family=Family.SQUARED_ERROR,
    )
    path.cv_mean = np.asarray(cv_mean, dtype=float)
    path.cv_se = np.asarray(cv_se, dtype=float)
    return path


def test_select_lambda_min_cv_argmin():
    path = _dummy_path([3.0, 1.0, 2.0], [0.1, 0.1, 0.1])
    assert select_lambda(path, CvRule.MIN_CV) == 1


def test_select_lambda_one_se_prefers_larger_lambda():
    path = _dummy_path([1.05, 1.0, 1.2], [0.1, 0.1, 0.1])
    assert select_lambda(path, CvRule.ONE_SE) == 0


def test_select_lambda_ties_go_to_largest_lambda():
    path = _dummy_path([1.0, 1.0, 1.0], [0.1, 0.1, 0.1])
    assert select_lambda(path, CvRule.MIN_CV) == 0
    assert select_lambda(path, CvRule.ONE_SE) == 0


def test_select_lambda_requires_cv():
    path = RegressionPath(
        lambdas=np.array([1.0, 0.1]), coefficients=np.zeros((2, 2)),
        family=Family.SQUARED_ERROR,
    )
    with pytest.raises(ConfigError):
        select_lambda(path, CvRule.MIN_CV)


# ---------------------------------------------------------------------------
# propensity fitting
# ---------------------------------------------------------------------------


def test_propensity_concentrates_at_half_under_null():
    data = generate_dataset(DgpConfig(n=2000, p=5, s=3, propensity_strength=0.0, seed=15))
    e_hat = fit_propensity(data.x, data.d, PenaltyConfig(n_lambda=15), k_folds=5, seed=1)
    assert abs(e_hat.mean() - 0.5) < 0.05


def test_propensity_intercept_only_with_zero_covariates():
    rng = np.random.default_rng(16)
    d = (rng.random(200) < 0.3).astype(float)
    x = np.zeros((200, 3))
    # full-data path: prediction is the sample treated fraction for every unit
    path = fit_path(x, d, Family.LOGISTIC, PenaltyConfig(n_lambda=4))
    np.testing.assert_allclose(path.predict(x, 3), d.mean(), atol=1e-9)
    # out-of-fold: constant per fold, near the treated fraction
    e_hat = fit_propensity(x, d, PenaltyConfig(n_lambda=4), k_folds=4, seed=2)
    assert len(np.unique(np.round(e_hat, 12))) <= 4
    assert np.all(np.abs(e_hat - d.mean()) < 0.15)


def test_propensity_predictions_are_clipped():
    rng = np.random.default_rng(17)
    x = rng.standard_normal((300, 1)) * 8.0
    d = (x[:, 0] > 0).astype(float)  # perfectly separable
    e_hat = fit_propensity(x, d, PenaltyConfig(n_lambda=10, lambda_min_ratio=0.001),
                           k_folds=5, seed=3)
    assert e_hat.min() >= PROPENSITY_CLIP and e_hat.max() <= 1.0 - PROPENSITY_CLIP
    assert e_hat.min() == PROPENSITY_CLIP and e_hat.max() == 1.0 - PROPENSITY_CLIP


def test_propensity_degenerate_treatment_errors():
    x = np.random.default_rng(18).standard_normal((50, 2))
    with pytest.raises(DataError, match="degenerate treatment"):
        fit_propensity(x, np.ones(50), PenaltyConfig(), k_folds=5, seed=0)
