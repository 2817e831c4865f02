"""Residual-normality gatekeeper and orthogonality diagnostics.

The regime selector applies the Jarque-Bera test to treatment residuals:
an insignificant result (Gaussian regime) enforces first-order settings
with the conservative one-standard-error lambda rule; a significant one
switches to the second-order regime with min-CV lambdas and richer
nuisance modeling. A concrete second-order score is not part of this
package; the decision record is the extension point a second-order moment
construction would hook into.

``check_orthogonality`` measures, by Monte Carlo finite differences, how
the expectation of the first-order score reacts to a nuisance perturbation
of the treatment regression. Its second directional derivative is nonzero
even under Gaussian residuals, which is the practical face of the
higher-order orthogonality barrier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Tuple

import numpy as np
from numpy.typing import NDArray

from .data import Gaussian, NoiseDist
from .errors import DataError, NumericError
from .gamma_lasso import CvRule

__all__ = [
    "Mode",
    "GatekeeperDecision",
    "DmlScoreSpec",
    "OrthogonalityReport",
    "sample_moments",
    "jb_statistic",
    "jarque_bera",
    "decide_mode",
    "check_orthogonality",
]


class Mode(str, Enum):
    FIRST_ORDER = "first_order"
    SECOND_ORDER = "second_order"


@dataclass(frozen=True)
class GatekeeperDecision:
    """Moment statistics, test result, and the selected estimation regime."""

    skewness: float
    kurtosis: float
    jb_stat: float
    p_value: float
    alpha: float
    mode: Mode

    @property
    def cv_rule(self) -> CvRule:
        return CvRule.ONE_SE if self.mode is Mode.FIRST_ORDER else CvRule.MIN_CV

    def to_dict(self) -> dict:
        return {
            "S": self.skewness,
            "K": self.kurtosis,
            "jb": self.jb_stat,
            "p": self.p_value,
            "mode": self.mode.value,
        }


def sample_moments(v: NDArray) -> Tuple[float, float]:
    """Skewness and non-excess kurtosis from biased (1/n) central moments."""
    v = np.asarray(v, dtype=float)
    if v.size < 4:
        raise DataError("sample_moments needs at least 4 observations")
    centered = v - v.mean()
    m2 = float(np.mean(centered**2))
    if m2 <= 0.0:
        raise DataError("degenerate sample: zero variance")
    m3 = float(np.mean(centered**3))
    m4 = float(np.mean(centered**4))
    return m3 / m2**1.5, m4 / m2**2


def jb_statistic(n: int, skewness: float, kurtosis: float) -> float:
    """The statistic n/6 (S^2 + (K-3)^2 / 4) from precomputed moments."""
    return n / 6.0 * (skewness**2 + 0.25 * (kurtosis - 3.0) ** 2)


def jarque_bera(v: NDArray) -> Tuple[float, float]:
    """JB statistic and its chi-square(2) p-value.

    The survival function of chi-square with two degrees of freedom is
    exactly exp(-x/2); no approximation is involved.
    """
    v = np.asarray(v, dtype=float)
    s, k = sample_moments(v)
    jb = jb_statistic(v.size, s, k)
    return jb, math.exp(-jb / 2.0)


def decide_mode(residuals: NDArray, alpha: float = 0.05) -> GatekeeperDecision:
    """Deterministic regime selection from the residual distribution.

    p > alpha keeps the first-order regime (one-SE lambda rule); otherwise
    the second-order regime (min-CV rule) is activated.
    """
    s, k = sample_moments(residuals)
    jb, p = jarque_bera(residuals)
    mode = Mode.FIRST_ORDER if p > alpha else Mode.SECOND_ORDER
    return GatekeeperDecision(
        skewness=s, kurtosis=k, jb_stat=jb, p_value=p, alpha=alpha, mode=mode
    )


# ---------------------------------------------------------------------------
# Orthogonality checker
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DmlScoreSpec:
    """First-order partialled-out score at true parameter ``theta0``.

    The nuisance perturbation direction is a unit-variance field h(X), so a
    step of size t shifts the treatment regression by t * h(X). A constant
    direction would make the second difference deterministic (zero Monte
    Carlo error), hence the random direction with E[h^2] = 1; magnitudes
    match the constant-offset case.
    """

    theta0: float = 1.0
    fd_step: float = 1e-3


@dataclass(frozen=True)
class OrthogonalityReport:
    order: int
    mc_estimate: float
    std_error: float
    n_samples: int
    richardson_gap: float = 0.0


def _directional_samples(score_spec, u, zeta, h, t):
    # score at perturbed nuisance: residual gains theta0 * t * h, treatment
    # residual loses t * h
    return (zeta + score_spec.theta0 * t * h) * (u - t * h)


def check_orthogonality(
    score_spec: DmlScoreSpec,
    residual_dist: NoiseDist = Gaussian(1.0),
    order: int = 1,
    n_mc: int = 100_000,
    seed: int = 0,
) -> OrthogonalityReport:
    """Monte Carlo directional derivative of the first-order score's mean.

    Central finite differences with step ``fd_step`` on the nuisance
    perturbation, evaluated at the true parameters under ``residual_dist``
    treatment residuals; the step is cross-checked against half the step
    (Richardson-style) and the gap reported.
    """
    if order not in (1, 2):
        raise DataError(f"order must be 1 or 2, got {order}")
    rng = np.random.default_rng(seed)
    u = residual_dist.draw(rng, n_mc)
    zeta = rng.standard_normal(n_mc)
    h = rng.standard_normal(n_mc)

    def estimate(step: float) -> Tuple[float, float]:
        plus = _directional_samples(score_spec, u, zeta, h, step)
        minus = _directional_samples(score_spec, u, zeta, h, -step)
        if order == 1:
            deriv = (plus - minus) / (2.0 * step)
        else:
            base = _directional_samples(score_spec, u, zeta, h, 0.0)
            deriv = (plus - 2.0 * base + minus) / step**2
        est = float(deriv.mean())
        se = float(deriv.std(ddof=1) / math.sqrt(n_mc)) if n_mc > 1 else 0.0
        return est, se

    est, se = estimate(score_spec.fd_step)
    est_half, _ = estimate(score_spec.fd_step / 2.0)
    if not (math.isfinite(est) and math.isfinite(est_half) and math.isfinite(se)):
        raise NumericError("orthogonality check produced non-finite samples")
    return OrthogonalityReport(
        order=order,
        mc_estimate=est,
        std_error=se,
        n_samples=n_mc,
        richardson_gap=abs(est - est_half),
    )
