"""Outlier-robust estimation of the average treatment effect on the overlap.

Combines density-power robust scoring with analytic re-centering, overlap
weighting, graduated non-convexity optimization, concave-penalty nuisance
paths, and a residual-normality gatekeeper, plus a Monte Carlo benchmark
harness and a CLI.
"""

from .benchmark import BenchmarkConfig, BenchmarkReport, CellResult, run_benchmark
from .data import (
    ContaminationSpec,
    CovariateDependent,
    Dataset,
    DgpConfig,
    Gaussian,
    OutcomeShift,
    PropensityExtreme,
    SkewedMixture,
    StudentT,
    contaminate,
    generate_dataset,
    load_csv,
    write_csv,
)
from .errors import ConfigError, DataError, NumericError, RobatoError
from .gamma_lasso import (
    CvRule,
    Family,
    PenaltyConfig,
    RegressionPath,
    cross_validate,
    fit_path,
    fit_propensity,
    select_lambda,
)
from .gatekeeper import (
    DmlScoreSpec,
    GatekeeperDecision,
    Mode,
    OrthogonalityReport,
    check_orthogonality,
    decide_mode,
    jarque_bera,
    sample_moments,
)
from .gnc import (
    GncSchedule,
    SolveResult,
    default_schedule,
    init_convex,
    irls_step,
    solve_gnc,
    surrogate_weight,
)
from .pipeline import (
    EstimateReport,
    EstimatorVariant,
    NuisanceEstimates,
    PipelineConfig,
    cross_fit,
    estimate_ato,
    standard_error,
)
from .robust_core import (
    GammaConfig,
    ScoreComponents,
    TreatmentForm,
    bias_correction,
    dpd_objective,
    estimate_scale,
    overlap_weight,
    robust_weight,
    score,
)

__version__ = "0.1.0"
