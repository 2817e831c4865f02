"""Dataset container, synthetic data generation, contamination, CSV I/O.

The synthetic generator draws from a partially linear model

    y = d * theta_true + g0(x) + noise,      d ~ Bernoulli(e0(x)),

with e0(x) = logistic(propensity_strength * x @ beta) and g0 either linear
or coordinate-wise quadratic in the first ``s`` covariates. Both linear
indexes use the same sparse coefficient pattern (+/- coef_magnitude with
alternating signs) so that support-recovery checks have a known truth.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from numpy.typing import NDArray

from .errors import ConfigError, DataError

__all__ = [
    "Dataset",
    "Gaussian",
    "StudentT",
    "SkewedMixture",
    "DgpConfig",
    "OutcomeShift",
    "CovariateDependent",
    "PropensityExtreme",
    "ContaminationSpec",
    "generate_dataset",
    "contaminate",
    "load_csv",
    "write_csv",
    "sparse_coefficients",
    "sigmoid",
]


def sigmoid(z: NDArray) -> NDArray:
    """Numerically stable logistic function."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _as_readonly(a: NDArray, dtype=float) -> NDArray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Dataset:
    """Immutable (y, d, x) triple with an optional ground-truth outlier mask.

    Attributes
    ----------
    y : ndarray of shape (n,)
        Outcome.
    d : ndarray of shape (n,)
        Treatment, binary 0/1 or a continuous dosage.
    x : ndarray of shape (n, p)
        Covariates.
    outlier_mask : ndarray of bool, shape (n,), optional
        Marks contaminated rows; only meaningful for synthetic data.
    """

    y: NDArray
    d: NDArray
    x: NDArray
    outlier_mask: Optional[NDArray] = None

    def __post_init__(self):
        y = _as_readonly(np.atleast_1d(self.y))
        d = _as_readonly(np.atleast_1d(self.d))
        x = np.array(self.x, dtype=float, copy=True)
        if x.ndim == 1:
            x = x[:, None]
        x = _as_readonly(x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "x", x)
        n = y.shape[0]
        if n < 1 or x.shape[1] < 1:
            raise DataError("dataset requires n >= 1 and p >= 1")
        if d.shape[0] != n or x.shape[0] != n:
            raise DataError(
                f"length mismatch: y has {n} rows, d has {d.shape[0]}, x has {x.shape[0]}"
            )
        for name, arr in (("y", y), ("d", d), ("x", x)):
            if not np.all(np.isfinite(arr)):
                raise DataError(f"non-finite entries in column(s) {name}")
        if self.outlier_mask is not None:
            mask = _as_readonly(self.outlier_mask, dtype=bool)
            if mask.shape[0] != n:
                raise DataError("outlier_mask length does not match n")
            object.__setattr__(self, "outlier_mask", mask)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def is_binary_treatment(self) -> bool:
        return bool(np.all((self.d == 0.0) | (self.d == 1.0)))


# ---------------------------------------------------------------------------
# Noise distributions for the synthetic generator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Gaussian:
    """Centered normal noise with standard deviation ``sigma``."""

    sigma: float = 1.0

    def validate(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ConfigError(f"Gaussian sigma must be > 0, got {self.sigma}")

    def draw(self, rng: np.random.Generator, n: int) -> NDArray:
        return self.sigma * rng.standard_normal(n)


@dataclass(frozen=True)
class StudentT:
    """Student-t noise; df > 2 keeps the variance finite."""

    df: float = 3.0

    def validate(self):
        if not (self.df > 2 and math.isfinite(self.df)):
            raise ConfigError(f"StudentT df must be > 2, got {self.df}")

    def draw(self, rng: np.random.Generator, n: int) -> NDArray:
        return rng.standard_t(self.df, size=n)


@dataclass(frozen=True)
class SkewedMixture:
    """Two-component normal mixture, re-centered to mean zero.

    With probability ``weight`` draws N(loc, scale^2), otherwise N(0, 1);
    the mixture mean weight*loc is subtracted so E[noise] = 0.
    """

    weight: float = 0.1
    loc: float = 3.0
    scale: float = 1.0

    def validate(self):
        if not (0 < self.weight < 1):
            raise ConfigError(f"mixture weight must be in (0,1), got {self.weight}")
        if not (self.scale > 0 and math.isfinite(self.loc)):
            raise ConfigError("mixture loc must be finite and scale > 0")

    def draw(self, rng: np.random.Generator, n: int) -> NDArray:
        comp = rng.random(n) < self.weight
        z = rng.standard_normal(n)
        out = np.where(comp, self.loc + self.scale * z, z)
        return out - self.weight * self.loc


NoiseDist = Union[Gaussian, StudentT, SkewedMixture]


@dataclass(frozen=True)
class DgpConfig:
    """Configuration of the partially linear synthetic data generator.

    ``s`` of the ``p`` covariates carry signal; both the outcome nuisance
    and the propensity index use the same +/- coef_magnitude pattern.
    ``g_shape`` switches the outcome nuisance between the linear form and a
    coordinate-wise quadratic (standardized (x^2-1)/sqrt(2)), the latter
    deliberately outside the span of linear fits for misspecification
    benchmarks.
    """

    theta_true: float = 1.0
    n: int = 500
    p: int = 10
    s: int = 3
    coef_magnitude: float = 1.0
    noise: NoiseDist = Gaussian(1.0)
    propensity_strength: float = 1.0
    seed: int = 0
    g_shape: str = "linear"

    def validate(self):
        if self.n <= 0 or self.p < 1:
            raise ConfigError(f"need n > 0 and p >= 1, got n={self.n}, p={self.p}")
        if not 0 <= self.s <= self.p:
            raise ConfigError(f"need 0 <= s <= p, got s={self.s}, p={self.p}")
        if not math.isfinite(self.coef_magnitude):
            raise ConfigError("coef_magnitude must be finite")
        if not math.isfinite(self.propensity_strength):
            raise ConfigError("propensity_strength must be finite")
        if self.g_shape not in ("linear", "quadratic"):
            raise ConfigError(f"unknown g_shape: {self.g_shape!r}")
        self.noise.validate()


def sparse_coefficients(p: int, s: int, magnitude: float) -> NDArray:
    """Coefficient vector with alternating +/- ``magnitude`` in the first s slots."""
    beta = np.zeros(p)
    signs = np.where(np.arange(s) % 2 == 0, 1.0, -1.0)
    beta[:s] = magnitude * signs
    return beta


def _g0(x: NDArray, beta: NDArray, shape: str) -> NDArray:
    if shape == "linear":
        return x @ beta
    # quadratic: each signal coordinate enters through (x^2 - 1)/sqrt(2),
    # which is mean-zero with unit variance under standard normal covariates
    return ((x**2 - 1.0) / math.sqrt(2.0)) @ beta


def true_propensity(config: DgpConfig, x: NDArray) -> NDArray:
    """Propensity e0(x) implied by the generator configuration."""
    beta = sparse_coefficients(config.p, config.s, config.coef_magnitude)
    return sigmoid(config.propensity_strength * (x @ beta))


def generate_dataset(config: DgpConfig) -> Dataset:
    """Draw one dataset from the partially linear model.

    Deterministic given ``config.seed``; draw order is covariates, then
    treatment, then noise. The returned outlier mask is all-false.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    n, p = config.n, config.p
    beta = sparse_coefficients(p, config.s, config.coef_magnitude)

    x = rng.standard_normal((n, p))
    e0 = sigmoid(config.propensity_strength * (x @ beta))
    d = rng.binomial(1, e0).astype(float)
    noise = config.noise.draw(rng, n)
    y = config.theta_true * d + _g0(x, beta, config.g_shape) + noise
    return Dataset(y=y, d=d, x=x, outlier_mask=np.zeros(n, dtype=bool))


# ---------------------------------------------------------------------------
# Contamination mechanisms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OutcomeShift:
    """Shift selected outcomes by ``magnitude * noise_scale``.

    ``noise_scale`` carries the noise standard deviation the magnitude is
    expressed in; the mechanism has no access to the generator config.
    With ``treated_only`` the rows are sampled from the treated arm, which
    makes the contamination correlate with the treatment and actually bias
    non-robust estimators instead of just inflating their variance.
    """

    magnitude: float = 10.0
    noise_scale: float = 1.0
    treated_only: bool = False

    def validate(self):
        if not (math.isfinite(self.magnitude) and self.noise_scale > 0):
            raise ConfigError("OutcomeShift needs finite magnitude and noise_scale > 0")


@dataclass(frozen=True)
class CovariateDependent:
    """Outcome shift restricted to a covariate region.

    ``predicate`` maps the covariate matrix to a boolean eligibility vector;
    rows are sampled from the eligible set only.
    """

    predicate: Callable[[NDArray], NDArray]
    magnitude: float = 10.0
    noise_scale: float = 1.0

    def validate(self):
        if not callable(self.predicate):
            raise ConfigError("CovariateDependent predicate must be callable")
        if not (math.isfinite(self.magnitude) and self.noise_scale > 0):
            raise ConfigError("CovariateDependent needs finite magnitude and noise_scale > 0")


@dataclass(frozen=True)
class PropensityExtreme:
    """Push selected rows' covariates to an extreme true propensity.

    Each selected row is moved the minimal distance along the propensity
    index direction so that logistic(index_coefs @ x) equals ``target``.
    ``index_coefs`` must be the full linear index (strength included).
    Treatments are left unchanged, which is what makes the rows propensity
    outliers.
    """

    target: float = 0.02
    index_coefs: Sequence[float] = ()

    def validate(self):
        if not (0 < self.target < 1):
            raise ConfigError("PropensityExtreme target must be in (0,1)")
        if 0.05 <= self.target <= 0.95:
            raise ConfigError("PropensityExtreme target must lie outside [0.05, 0.95]")
        coefs = np.asarray(self.index_coefs, dtype=float)
        if coefs.size == 0 or not np.any(coefs != 0.0):
            raise ConfigError("PropensityExtreme needs a nonzero index_coefs vector")


Mechanism = Union[OutcomeShift, CovariateDependent, PropensityExtreme]


@dataclass(frozen=True)
class ContaminationSpec:
    """Contamination fraction, mechanism, and sampling seed."""

    rate: float
    mechanism: Mechanism = field(default_factory=OutcomeShift)
    seed: int = 0

    def validate(self):
        if not (0.0 <= self.rate <= 0.9):
            raise ConfigError(f"contamination rate must be in [0, 0.9], got {self.rate}")
        self.mechanism.validate()


def contaminate(data: Dataset, spec: ContaminationSpec) -> Dataset:
    """Return a copy of ``data`` with round(rate * n) rows modified.

    Rows are drawn by seeded sampling without replacement; the returned
    outlier mask marks exactly the modified rows. The input is not touched.
    """
    spec.validate()
    n = data.n
    k = int(round(spec.rate * n))
    y = data.y.copy()
    x = data.x.copy()
    d = data.d.copy()
    mask = np.zeros(n, dtype=bool)
    if k == 0:
        return Dataset(y=y, d=d, x=x, outlier_mask=mask)

    rng = np.random.default_rng(spec.seed)
    mech = spec.mechanism
    if isinstance(mech, OutcomeShift):
        if mech.treated_only:
            eligible = np.flatnonzero(d == 1.0)
            if eligible.size < k:
                raise DataError(
                    f"treated-only contamination needs {k} treated rows, found {eligible.size}"
                )
            rows = rng.choice(eligible, size=k, replace=False)
        else:
            rows = rng.choice(n, size=k, replace=False)
        y[rows] += mech.magnitude * mech.noise_scale
    elif isinstance(mech, CovariateDependent):
        eligible = np.flatnonzero(np.asarray(mech.predicate(x), dtype=bool))
        if eligible.size < k:
            raise DataError(
                f"contamination region too small: {eligible.size} eligible rows, need {k}"
            )
        rows = rng.choice(eligible, size=k, replace=False)
        y[rows] += mech.magnitude * mech.noise_scale
    elif isinstance(mech, PropensityExtreme):
        coefs = np.asarray(mech.index_coefs, dtype=float)
        if coefs.shape[0] != data.p:
            raise ConfigError(
                f"index_coefs length {coefs.shape[0]} does not match p={data.p}"
            )
        rows = rng.choice(n, size=k, replace=False)
        target_index = math.log(mech.target / (1.0 - mech.target))
        step = (target_index - x[rows] @ coefs) / float(coefs @ coefs)
        x[rows] = x[rows] + step[:, None] * coefs[None, :]
    else:  # pragma: no cover - dataclass union is closed
        raise ConfigError(f"unknown contamination mechanism: {mech!r}")

    mask[rows] = True
    return Dataset(y=y, d=d, x=x, outlier_mask=mask)


# ---------------------------------------------------------------------------
# CSV I/O
# ---------------------------------------------------------------------------


def _format_value(v: float) -> str:
    # repr round-trips doubles exactly and is byte-stable across runs
    return repr(float(v))


def write_csv(data: Dataset, path) -> None:
    """Write ``data`` as UTF-8, LF-terminated CSV with header y,d,x1..xp[,outlier]."""
    p = data.p
    header = ["y", "d"] + [f"x{j + 1}" for j in range(p)]
    mask = data.outlier_mask
    if mask is not None:
        header.append("outlier")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(data.n):
            row = [_format_value(data.y[i]), _format_value(data.d[i])]
            row.extend(_format_value(v) for v in data.x[i])
            if mask is not None:
                row.append(str(int(mask[i])))
            fh.write(",".join(row) + "\n")


def load_csv(path) -> Dataset:
    """Parse a dataset written by :func:`write_csv` (or matching its schema)."""
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        for required in ("y", "d"):
            if required not in header:
                raise DataError(f"missing column: {required}")
        if header[0] != "y" or header[1] != "d":
            raise DataError(f"header must start with y,d; got {header[:2]}")
        has_outlier = header[-1] == "outlier"
        x_names = header[2 : -1 if has_outlier else len(header)]
        expected = [f"x{j + 1}" for j in range(len(x_names))]
        if not x_names:
            raise DataError("missing column: x1")
        if x_names != expected:
            raise DataError(f"covariate columns must be named x1..xp in order, got {x_names}")
        n_fields = len(header)

        ys, ds, xs, masks = [], [], [], []
        for row_num, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != n_fields:
                raise DataError(f"row {row_num}: expected {n_fields} fields, got {len(row)}")
            values = []
            for col_name, cell in zip(header, row):
                if col_name == "outlier":
                    continue
                try:
                    values.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"row {row_num}, column {col_name}: could not parse {cell!r}"
                    ) from None
            ys.append(values[0])
            ds.append(values[1])
            xs.append(values[2:])
            if has_outlier:
                cell = row[-1].strip()
                if cell not in ("0", "1"):
                    raise DataError(f"row {row_num}, column outlier: could not parse {cell!r}")
                masks.append(cell == "1")
    if not ys:
        raise DataError(f"{path}: no data rows")
    mask_arr = np.array(masks, dtype=bool) if has_outlier else None
    return Dataset(y=np.array(ys), d=np.array(ds), x=np.array(xs), outlier_mask=mask_arr)
