"""Graduated non-convexity solver for the scalar treatment effect.

The homotopy family inflates the working scale: at level mu the robust
weight is exp(-gamma r^2 / (2 (sigma^2 + mu))), so mu -> infinity is the
convex overlap-weighted least-squares problem and mu = 0 is the target
density-power objective. Each level runs iteratively reweighted least
squares warm-started from the previous level, and a final exact mu = 0
stage is always appended.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from numpy.typing import NDArray

from .errors import ConfigError, NumericError
from .robust_core import GammaConfig, TreatmentForm, overlap_weight, partial_residuals

__all__ = [
    "GncSchedule",
    "TraceEntry",
    "SolveResult",
    "surrogate_weight",
    "irls_step",
    "init_convex",
    "solve_gnc",
    "default_schedule",
]

_DEGENERATE_DESIGN = 1e-12


@dataclass(frozen=True)
class GncSchedule:
    """Geometric annealing schedule on the smoothness parameter mu.

    ``mu0`` and ``mu_min`` are in squared-residual units. The level sequence
    is mu0 * alpha^k down to the first level at or below mu_min, plus the
    exact mu = 0 stage; with mu_min = 0 the geometric part stops at
    mu0 * 1e-8.
    """

    mu0: float
    alpha: float = 0.5
    mu_min: float = 0.0
    max_inner: int = 200
    inner_tol: float = 1e-9

    def validate(self):
        if not (self.mu0 > self.mu_min >= 0):
            raise ConfigError(f"need mu0 > mu_min >= 0, got mu0={self.mu0}, mu_min={self.mu_min}")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must be in (0,1), got {self.alpha}")
        if self.max_inner < 1 or self.inner_tol <= 0:
            raise ConfigError("need max_inner >= 1 and inner_tol > 0")

    def levels(self) -> List[float]:
        """Mu values visited, in order, ending with the exact 0 stage."""
        self.validate()
        floor = self.mu_min if self.mu_min > 0 else self.mu0 * 1e-8
        n_steps = math.ceil(math.log(floor / self.mu0) / math.log(self.alpha) - 1e-9)
        n_steps = max(n_steps, 0)
        return [self.mu0 * self.alpha**k for k in range(n_steps + 1)] + [0.0]


@dataclass
class TraceEntry:
    mu: float
    theta: float
    inner_iterations: int

    def to_dict(self) -> dict:
        return {"mu": self.mu, "theta": self.theta, "iters": self.inner_iterations}


@dataclass
class SolveResult:
    """Solution with the per-level trace and final composite weights."""

    theta_hat: float
    converged: bool
    trace: List[TraceEntry] = field(default_factory=list)
    final_weights: Optional[NDArray] = None

    def trace_dicts(self) -> List[dict]:
        return [entry.to_dict() for entry in self.trace]


def surrogate_weight(r, mu: float, cfg: GammaConfig):
    """Robust weight with the scale inflated by mu; mu = 0 is the target weight."""
    cfg.validate()
    if mu < 0:
        raise ConfigError(f"mu must be >= 0, got {mu}")
    r = np.asarray(r, dtype=float)
    out = np.exp(-cfg.gamma * r**2 / (2.0 * (cfg.sigma**2 + mu)))
    return float(out) if out.ndim == 0 else out


def _wls_theta(u: NDArray, y_tilde: NDArray, w: NDArray) -> float:
    denom = float(w @ (u * u))
    if denom < _DEGENERATE_DESIGN:
        raise NumericError("degenerate design: composite weights leave no treatment variation")
    return float(w @ (u * y_tilde)) / denom


def irls_step(
    data,
    nuis,
    theta: float,
    mu: float,
    cfg: GammaConfig,
    form: TreatmentForm = TreatmentForm.RESIDUALIZED,
) -> float:
    """One weighted-least-squares update with composite overlap * robust weights."""
    u, r = partial_residuals(data, theta, nuis, form)
    w = overlap_weight(nuis.e_hat) * surrogate_weight(r, mu, cfg)
    return _wls_theta(u, data.y - nuis.g_hat, w)


def init_convex(
    data, nuis, form: TreatmentForm = TreatmentForm.RESIDUALIZED
) -> float:
    """Overlap-weighted least squares (all robust weights 1): the convex limit."""
    u, _ = partial_residuals(data, 0.0, nuis, form)
    w = overlap_weight(np.asarray(nuis.e_hat, dtype=float))
    return _wls_theta(u, data.y - nuis.g_hat, np.broadcast_to(w, u.shape))


def solve_gnc(
    data,
    nuis,
    schedule: GncSchedule,
    cfg: GammaConfig,
    form: TreatmentForm = TreatmentForm.RESIDUALIZED,
) -> SolveResult:
    """Anneal from the convex initialization down to the target objective.

    Every level runs the inner IRLS to ``inner_tol`` (or ``max_inner``),
    warm-started from the previous level; ``converged`` reports whether all
    inner loops met the tolerance.
    """
    schedule.validate()
    cfg.validate()
    theta = init_convex(data, nuis, form)
    trace: List[TraceEntry] = []
    all_converged = True
    for mu in schedule.levels():
        iters = 0
        level_converged = False
        for _ in range(schedule.max_inner):
            new_theta = irls_step(data, nuis, theta, mu, cfg, form)
            iters += 1
            done = abs(new_theta - theta) < schedule.inner_tol
            theta = new_theta
            if done:
                level_converged = True
                break
        if not level_converged:
            all_converged = False
        trace.append(TraceEntry(mu=mu, theta=theta, inner_iterations=iters))

    u, r = partial_residuals(data, theta, nuis, form)
    final_weights = overlap_weight(nuis.e_hat) * surrogate_weight(r, 0.0, cfg)
    return SolveResult(
        theta_hat=theta, converged=all_converged, trace=trace, final_weights=final_weights
    )


def default_schedule(
    sigma: float, gamma: float = 0.0, max_abs_residual: Optional[float] = None
) -> GncSchedule:
    """Schedule sized from the working scale.

    mu0 = 64 sigma^2 keeps initial weights above 0.99 for residuals within
    ten sigma; when the initial residuals are wider than that (e.g. gross
    outliers present at the convex initialization), mu0 is raised so the
    largest one still starts with weight >= 0.99.
    """
    if sigma <= 0:
        raise ConfigError(f"sigma must be > 0, got {sigma}")
    mu0 = 64.0 * sigma**2
    if gamma > 0 and max_abs_residual is not None and math.isfinite(max_abs_residual):
        # exp(-g r^2 / (2 (s^2 + mu))) >= 0.99  <=>  s^2 + mu >= g r^2 / (2 ln(1/0.99));
        # sized for 0.995 so rounding never lands just under the 0.99 contract
        needed = gamma * max_abs_residual**2 / (2.0 * math.log(1.0 / 0.995)) - sigma**2
        mu0 = max(mu0, needed)
    return GncSchedule(mu0=mu0, alpha=0.5, mu_min=sigma**2 / 16.0)
