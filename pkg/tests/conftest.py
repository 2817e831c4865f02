"""Shared builders for solver and pipeline tests."""

from __future__ import annotations

import numpy as np

from robato import Dataset
from robato.pipeline import NuisanceEstimates


def make_nuisances(n, e_hat=0.5, m_hat=None, g_hat=None):
    """NuisanceEstimates filled with constants unless overridden."""
    e = np.full(n, e_hat) if np.isscalar(e_hat) else np.asarray(e_hat, dtype=float)
    m = np.full(n, 0.0) if m_hat is None else np.asarray(m_hat, dtype=float)
    g = np.zeros(n) if g_hat is None else np.asarray(g_hat, dtype=float)
    return NuisanceEstimates(m_hat=m, g_hat=g, e_hat=e, fold_id=np.zeros(n, dtype=int))


def trap_instance(seed, n=50, frac=0.4, theta0=1.0, theta_fake=5.0,
                  sigma_clean=0.25, sigma_out=0.05, out_scale=0.7):
    """1-d instance whose outliers sit tightly on a consistent fake slope.

    The outlier covariates are drawn slightly tighter than the clean ones
    so the instance has a trap (verified per test) without the cluster
    dominating the leverage. Returns (data, nuisances, outlier mask).
    """
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(n)
    n_out = int(round(frac * n))
    is_out = np.zeros(n, dtype=bool)
    is_out[rng.choice(n, n_out, replace=False)] = True
    u[is_out] *= out_scale
    y = np.where(
        is_out,
        theta_fake * u + sigma_out * rng.standard_normal(n),
        theta0 * u + sigma_clean * rng.standard_normal(n),
    )
    data = Dataset(y=y, d=u, x=np.zeros((n, 1)))
    return data, make_nuisances(n), is_out


def gamma_objective_grid(data, gamma, sigma, grid):
    """Dense evaluation of the robust objective shape (constant weights)."""
    r = data.y[None, :] - grid[:, None] * data.d[None, :]
    return -np.mean(np.exp(-gamma * r**2 / (2.0 * sigma**2)), axis=1)
