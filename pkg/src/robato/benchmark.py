"""Monte Carlo benchmark comparing the estimator variants.

Runs a grid of estimator variant x contamination level x replication,
with one shared dataset per replication so the arms are paired. Emits a
delimited per-cell table (benchmark.csv), the same cells as JSON, and a
plain-text summary whose columns are the three approaches and whose rows
are the empirical quality metrics. Failures are recorded per cell and the
run continues.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from .data import (
    ContaminationSpec,
    CovariateDependent,
    DgpConfig,
    Gaussian,
    OutcomeShift,
    PropensityExtreme,
    contaminate,
    generate_dataset,
    sparse_coefficients,
)
from .errors import ConfigError, RobatoError
from .pipeline import EstimatorVariant, PipelineConfig, estimate_ato
from .seeding import child_seed

__all__ = ["BenchmarkConfig", "CellResult", "BenchmarkReport", "run_benchmark"]


@dataclass(frozen=True)
class BenchmarkConfig:
    """Grid definition: generator, base pipeline, arms, contamination, seeds."""

    dgp: DgpConfig
    pipeline: PipelineConfig
    variants: Sequence[EstimatorVariant] = (
        EstimatorVariant.STANDARD_DML,
        EstimatorVariant.NAIVE_ROBUST,
        EstimatorVariant.UNIFIED,
    )
    mechanism: str = "outcome_shift"
    contamination_rates: Sequence[float] = (0.0,)
    contamination_magnitude: float = 10.0
    contamination_treated_only: bool = False
    contamination_target: float = 0.02
    contamination_column: int = 1
    contamination_threshold: float = 1.0
    n_reps: int = 100
    seed: int = 0

    def validate(self):
        self.dgp.validate()
        self.pipeline.validate()
        if self.n_reps < 1:
            raise ConfigError(f"n_reps must be >= 1, got {self.n_reps}")
        if self.mechanism not in ("outcome_shift", "covariate_dependent", "propensity_extreme"):
            raise ConfigError(f"unknown contamination mechanism: {self.mechanism!r}")
        for rate in self.contamination_rates:
            if not 0.0 <= rate <= 0.9:
                raise ConfigError(f"contamination rate {rate} outside [0, 0.9]")
        if not self.variants:
            raise ConfigError("benchmark needs at least one estimator variant")


@dataclass
class CellResult:
    """Aggregates for one (variant, contamination rate) cell."""

    variant: str
    mechanism: str
    rate: float
    n_runs: int
    n_failed: int
    bias: float
    rmse: float
    coverage: float
    median_abs_error: float
    mean_ess: float

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "mechanism": self.mechanism,
            "rate": self.rate,
            "n_runs": self.n_runs,
            "n_failed": self.n_failed,
            "bias": self.bias,
            "rmse": self.rmse,
            "coverage": self.coverage,
            "median_abs_error": self.median_abs_error,
            "mean_ess": self.mean_ess,
        }


@dataclass
class BenchmarkReport:
    cells: List[CellResult]
    summary: str
    csv_path: Optional[str] = None
    json_path: Optional[str] = None


def _noise_scale(dgp: DgpConfig) -> float:
    return dgp.noise.sigma if isinstance(dgp.noise, Gaussian) else 1.0


def _mechanism_for(config: BenchmarkConfig):
    if config.mechanism == "outcome_shift":
        return OutcomeShift(
            magnitude=config.contamination_magnitude,
            noise_scale=_noise_scale(config.dgp),
            treated_only=config.contamination_treated_only,
        )
    if config.mechanism == "covariate_dependent":
        col = config.contamination_column - 1
        threshold = config.contamination_threshold
        return CovariateDependent(
            predicate=lambda x: x[:, col] > threshold,
            magnitude=config.contamination_magnitude,
            noise_scale=_noise_scale(config.dgp),
        )
    coefs = config.dgp.propensity_strength * sparse_coefficients(
        config.dgp.p, config.dgp.s, config.dgp.coef_magnitude
    )
    return PropensityExtreme(target=config.contamination_target, index_coefs=tuple(coefs))


def _format(v: float) -> str:
    return repr(float(v))


def _atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def run_benchmark(config: BenchmarkConfig, out_dir: Optional[str] = None) -> BenchmarkReport:
    """Run the full grid; write benchmark.csv / benchmark.json / summary.txt.

    Replication r of every cell shares the dataset drawn with a child seed
    of the root, so variants are compared on identical draws. Output files
    are written atomically; reruns with the same config are byte-identical.
    """
    config.validate()
    theta0 = config.dgp.theta_true
    mechanism = _mechanism_for(config)

    records: Dict[tuple, dict] = {}
    for rate in config.contamination_rates:
        for variant in config.variants:
            records[(variant.value, rate)] = {
                "theta": [], "cover": [], "ess": [], "failed": 0,
            }

    for rep in range(config.n_reps):
        dgp_rep = replace(config.dgp, seed=child_seed(config.seed, "benchmark-dgp", rep))
        clean = generate_dataset(dgp_rep)
        for rate in config.contamination_rates:
            if rate > 0.0:
                spec = ContaminationSpec(
                    rate=rate,
                    mechanism=mechanism,
                    seed=child_seed(config.seed, "benchmark-contamination", rep),
                )
                data = contaminate(clean, spec)
            else:
                data = clean
            for variant in config.variants:
                cell = records[(variant.value, rate)]
                run_cfg = replace(
                    config.pipeline,
                    estimator_variant=variant,
                    seed=child_seed(config.seed, "benchmark-pipeline", rep),
                )
                try:
                    report = estimate_ato(data, run_cfg)
                except RobatoError:
                    cell["failed"] += 1
                    continue
                cell["theta"].append(report.theta_hat)
                lo, hi = report.ci95
                cell["cover"].append(lo <= theta0 <= hi)
                cell["ess"].append(report.effective_sample_size)

    cells: List[CellResult] = []
    for rate in config.contamination_rates:
        for variant in config.variants:
            rec = records[(variant.value, rate)]
            theta = np.asarray(rec["theta"], dtype=float)
            ok = theta.size > 0
            cells.append(
                CellResult(
                    variant=variant.value,
                    mechanism=config.mechanism,
                    rate=rate,
                    n_runs=config.n_reps,
                    n_failed=rec["failed"],
                    bias=float(theta.mean() - theta0) if ok else float("nan"),
                    rmse=float(np.sqrt(np.mean((theta - theta0) ** 2))) if ok else float("nan"),
                    coverage=float(np.mean(rec["cover"])) if ok else float("nan"),
                    median_abs_error=float(np.median(np.abs(theta - theta0))) if ok else float("nan"),
                    mean_ess=float(np.mean(rec["ess"])) if ok else float("nan"),
                )
            )

    summary = render_summary(config, cells)
    report = BenchmarkReport(cells=cells, summary=summary)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, "benchmark.csv")
        json_path = os.path.join(out_dir, "benchmark.json")
        _atomic_write(csv_path, _cells_csv(cells))
        payload = {
            "theta_true": theta0,
            "n_reps": config.n_reps,
            "mechanism": config.mechanism,
            "cells": [c.to_dict() for c in cells],
        }
        _atomic_write(json_path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
        _atomic_write(os.path.join(out_dir, "summary.txt"), summary)
        report.csv_path = csv_path
        report.json_path = json_path
    return report


def _cells_csv(cells: List[CellResult]) -> str:
    header = (
        "variant,mechanism,rate,n_runs,n_failed,bias,rmse,coverage,"
        "median_abs_error,mean_ess"
    )
    lines = [header]
    for c in cells:
        lines.append(
            ",".join(
                [
                    c.variant,
                    c.mechanism,
                    _format(c.rate),
                    str(c.n_runs),
                    str(c.n_failed),
                    _format(c.bias),
                    _format(c.rmse),
                    _format(c.coverage),
                    _format(c.median_abs_error),
                    _format(c.mean_ess),
                ]
            )
        )
    return "\n".join(lines) + "\n"


_METRICS = (
    ("bias", "bias"),
    ("rmse", "rmse"),
    ("ci95 coverage", "coverage"),
    ("median |error|", "median_abs_error"),
    ("mean ess", "mean_ess"),
    ("failures", "n_failed"),
)


def render_summary(config: BenchmarkConfig, cells: List[CellResult]) -> str:
    """Approaches-as-columns comparison table, one block per contamination level."""
    variants = [v.value for v in config.variants]
    width = max(18, max(len(v) for v in variants) + 2)
    out = [
        f"Benchmark: theta_true = {config.dgp.theta_true}, n = {config.dgp.n}, "
        f"{config.n_reps} replications per cell",
        f"Contamination mechanism: {config.mechanism}",
        "",
    ]
    by_key = {(c.variant, c.rate): c for c in cells}
    for rate in config.contamination_rates:
        out.append(f"-- contamination rate {rate:g} --")
        out.append("metric".ljust(18) + "".join(v.rjust(width) for v in variants))
        for label, attr in _METRICS:
            row = label.ljust(18)
            for v in variants:
                cell = by_key[(v, rate)]
                value = getattr(cell, attr)
                if attr == "n_failed":
                    row += str(value).rjust(width)
                else:
                    row += f"{value:.4g}".rjust(width)
            out.append(row)
        out.append("")
    return "\n".join(out) + "\n"
