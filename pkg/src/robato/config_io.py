"""Flat key-value configuration files (TOML grammar, no tables).

Every CLI command validates its config against a fixed key schema; unknown
keys are configuration errors so typos fail loudly. Numeric fields accept
TOML integers where floats are expected, but not the reverse.
"""

from __future__ import annotations

from typing import Optional, Tuple

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .benchmark import BenchmarkConfig
from .data import (
    ContaminationSpec,
    CovariateDependent,
    DgpConfig,
    Gaussian,
    OutcomeShift,
    PropensityExtreme,
    SkewedMixture,
    StudentT,
    sparse_coefficients,
)
from .errors import ConfigError
from .gamma_lasso import PenaltyConfig
from .gnc import GncSchedule
from .pipeline import EstimatorVariant, PipelineConfig
from .robust_core import TreatmentForm

__all__ = [
    "load_config",
    "parse_generate_config",
    "parse_pipeline_config",
    "parse_benchmark_config",
]

_DGP_KEYS = {
    "theta_true": float,
    "n": int,
    "p": int,
    "s": int,
    "coef_magnitude": float,
    "noise": str,
    "noise_sigma": float,
    "noise_df": float,
    "noise_weight": float,
    "noise_loc": float,
    "noise_scale": float,
    "propensity_strength": float,
    "g_shape": str,
    "seed": int,
}

_CONTAMINATION_KEYS = {
    "contamination_rate": float,
    "contamination_mechanism": str,
    "contamination_magnitude": float,
    "contamination_treated_only": bool,
    "contamination_column": int,
    "contamination_threshold": float,
    "contamination_target": float,
    "contamination_seed": int,
}

_PIPELINE_KEYS = {
    "k_folds": int,
    "gamma": float,
    "alpha": float,
    "seed": int,
    "estimator_variant": str,
    "treatment_form": str,
    "gamma_pen": float,
    "n_lambda": int,
    "lambda_min_ratio": float,
    "cd_max_iter": int,
    "cd_tol": float,
    "gnc_mu0": float,
    "gnc_alpha": float,
    "gnc_mu_min": float,
    "gnc_max_inner": int,
    "gnc_inner_tol": float,
    "propensity_override": float,
    "nuisance_clip": float,
}

_BENCHMARK_KEYS = {
    "variants": list,
    "contamination_rates": list,
    "n_reps": int,
}


def load_config(path) -> dict:
    """Parse a TOML file into a flat dict; nested tables are rejected."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot open config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    for key, value in raw.items():
        if isinstance(value, dict):
            raise ConfigError(f"{path}: nested table {key!r} not allowed; keys are flat")
    return raw


def _check_keys(raw: dict, schema: dict, context: str) -> None:
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown {context} key(s): {', '.join(unknown)}")
    for key, value in raw.items():
        want = schema[key]
        if want is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"key {key!r} must be a number, got {value!r}")
        elif want is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"key {key!r} must be an integer, got {value!r}")
        elif not isinstance(value, want):
            raise ConfigError(f"key {key!r} must be {want.__name__}, got {value!r}")


def _noise_from(raw: dict):
    kind = raw.get("noise", "gaussian")
    if kind == "gaussian":
        return Gaussian(sigma=float(raw.get("noise_sigma", 1.0)))
    if kind == "student_t":
        return StudentT(df=float(raw.get("noise_df", 3.0)))
    if kind == "skewed_mixture":
        return SkewedMixture(
            weight=float(raw.get("noise_weight", 0.1)),
            loc=float(raw.get("noise_loc", 3.0)),
            scale=float(raw.get("noise_scale", 1.0)),
        )
    raise ConfigError(f"unknown noise distribution: {kind!r}")


def _dgp_from(raw: dict) -> DgpConfig:
    cfg = DgpConfig(
        theta_true=float(raw.get("theta_true", 1.0)),
        n=int(raw.get("n", 500)),
        p=int(raw.get("p", 10)),
        s=int(raw.get("s", 3)),
        coef_magnitude=float(raw.get("coef_magnitude", 1.0)),
        noise=_noise_from(raw),
        propensity_strength=float(raw.get("propensity_strength", 1.0)),
        seed=int(raw.get("seed", 0)),
        g_shape=str(raw.get("g_shape", "linear")),
    )
    cfg.validate()
    return cfg


def _contamination_from(raw: dict, dgp: DgpConfig) -> Optional[ContaminationSpec]:
    rate = float(raw.get("contamination_rate", 0.0))
    if rate == 0.0 and "contamination_mechanism" not in raw:
        return None
    name = raw.get("contamination_mechanism", "outcome_shift")
    noise_scale = dgp.noise.sigma if isinstance(dgp.noise, Gaussian) else 1.0
    if name == "outcome_shift":
        mech = OutcomeShift(
            magnitude=float(raw.get("contamination_magnitude", 10.0)),
            noise_scale=noise_scale,
            treated_only=bool(raw.get("contamination_treated_only", False)),
        )
    elif name == "covariate_dependent":
        col = int(raw.get("contamination_column", 1))
        if not 1 <= col <= dgp.p:
            raise ConfigError(f"contamination_column must be in 1..{dgp.p}, got {col}")
        threshold = float(raw.get("contamination_threshold", 1.0))
        mech = CovariateDependent(
            predicate=lambda x, c=col - 1, t=threshold: x[:, c] > t,
            magnitude=float(raw.get("contamination_magnitude", 10.0)),
            noise_scale=noise_scale,
        )
    elif name == "propensity_extreme":
        coefs = dgp.propensity_strength * sparse_coefficients(
            dgp.p, dgp.s, dgp.coef_magnitude
        )
        mech = PropensityExtreme(
            target=float(raw.get("contamination_target", 0.02)),
            index_coefs=tuple(coefs),
        )
    else:
        raise ConfigError(f"unknown contamination mechanism: {name!r}")
    spec = ContaminationSpec(
        rate=rate, mechanism=mech, seed=int(raw.get("contamination_seed", 0))
    )
    spec.validate()
    return spec


def parse_generate_config(raw: dict) -> Tuple[DgpConfig, Optional[ContaminationSpec]]:
    """Generator config plus an optional contamination block."""
    _check_keys(raw, {**_DGP_KEYS, **_CONTAMINATION_KEYS}, "generate")
    dgp = _dgp_from(raw)
    return dgp, _contamination_from(raw, dgp)


def _enum_value(raw: dict, key: str, enum_cls, default):
    value = raw.get(key)
    if value is None:
        return default
    try:
        return enum_cls(value)
    except ValueError:
        allowed = ", ".join(e.value for e in enum_cls)
        raise ConfigError(f"key {key!r} must be one of: {allowed}; got {value!r}") from None


def parse_pipeline_config(raw: dict) -> PipelineConfig:
    """Estimation config for the fit and gatekeeper commands."""
    _check_keys(raw, _PIPELINE_KEYS, "pipeline")
    gnc = None
    if "gnc_mu0" in raw or "gnc_mu_min" in raw:
        if "gnc_mu0" not in raw or "gnc_mu_min" not in raw:
            raise ConfigError("an explicit schedule needs both gnc_mu0 and gnc_mu_min")
        gnc = GncSchedule(
            mu0=float(raw["gnc_mu0"]),
            alpha=float(raw.get("gnc_alpha", 0.5)),
            mu_min=float(raw["gnc_mu_min"]),
            max_inner=int(raw.get("gnc_max_inner", 200)),
            inner_tol=float(raw.get("gnc_inner_tol", 1e-9)),
        )
    penalty = PenaltyConfig(
        gamma_pen=float(raw.get("gamma_pen", 10.0)),
        n_lambda=int(raw.get("n_lambda", 30)),
        lambda_min_ratio=float(raw.get("lambda_min_ratio", 0.01)),
        max_iter=int(raw.get("cd_max_iter", 10_000)),
        tol=float(raw.get("cd_tol", 1e-7)),
    )
    override = raw.get("propensity_override")
    config = PipelineConfig(
        k_folds=int(raw.get("k_folds", 5)),
        gamma=float(raw.get("gamma", 0.5)),
        gnc=gnc,
        alpha=float(raw.get("alpha", 0.05)),
        seed=int(raw.get("seed", 0)),
        estimator_variant=_enum_value(
            raw, "estimator_variant", EstimatorVariant, EstimatorVariant.UNIFIED
        ),
        treatment_form=_enum_value(
            raw, "treatment_form", TreatmentForm, TreatmentForm.RESIDUALIZED
        ),
        penalty=penalty,
        propensity_override=float(override) if override is not None else None,
        nuisance_clip=float(raw.get("nuisance_clip", 3.0)),
    )
    config.validate()
    return config


def parse_benchmark_config(raw: dict) -> BenchmarkConfig:
    """Benchmark grid: generator + pipeline + arms + contamination levels."""
    schema = {**_DGP_KEYS, **_CONTAMINATION_KEYS, **_PIPELINE_KEYS, **_BENCHMARK_KEYS}
    del schema["contamination_rate"], schema["contamination_seed"]
    _check_keys(raw, schema, "benchmark")

    dgp_raw = {k: v for k, v in raw.items() if k in _DGP_KEYS}
    dgp = _dgp_from(dgp_raw)
    pipeline_raw = {k: v for k, v in raw.items() if k in _PIPELINE_KEYS}
    pipeline = parse_pipeline_config(pipeline_raw)

    variant_names = raw.get("variants", [v.value for v in EstimatorVariant])
    variants = []
    for name in variant_names:
        try:
            variants.append(EstimatorVariant(name))
        except ValueError:
            allowed = ", ".join(v.value for v in EstimatorVariant)
            raise ConfigError(f"unknown variant {name!r}; expected one of: {allowed}") from None

    rates = raw.get("contamination_rates", [0.0])
    if not isinstance(rates, list) or not all(
        isinstance(r, (int, float)) and not isinstance(r, bool) for r in rates
    ):
        raise ConfigError("contamination_rates must be a list of numbers")

    config = BenchmarkConfig(
        dgp=dgp,
        pipeline=pipeline,
        variants=tuple(variants),
        mechanism=str(raw.get("contamination_mechanism", "outcome_shift")),
        contamination_rates=tuple(float(r) for r in rates),
        contamination_magnitude=float(raw.get("contamination_magnitude", 10.0)),
        contamination_treated_only=bool(raw.get("contamination_treated_only", False)),
        contamination_target=float(raw.get("contamination_target", 0.02)),
        contamination_column=int(raw.get("contamination_column", 1)),
        contamination_threshold=float(raw.get("contamination_threshold", 1.0)),
        n_reps=int(raw.get("n_reps", 100)),
        seed=int(raw.get("seed", 0)),
    )
    config.validate()
    return config
