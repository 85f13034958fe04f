"""Certified first-order sensitivity indices from error-bounded surrogates.

The pipeline: draw a pick-freeze design, evaluate a surrogate carrying
per-point error bounds (e.g. a reduced-basis solver), bracket the
full-model index estimator from the surrogate data alone, and wrap
bracket and sampling error into one combined confidence interval. A
tuner picks the cheapest (basis size, sample size) pair for a target
interval length.
"""

__version__ = "0.1.0"

from .bounds import (
    BoundPair,
    MeanBoxes,
    MuGrid,
    QuadCoeffs,
    SurrogateSample,
    bound_pair,
    bound_pair_at,
    bound_pair_at_fitted,
    box_square_extrema,
    check_quadratic_fit,
    fit_quadratic,
    r_inf_sup_at,
)
from .combined import (
    CombinedInterval,
    EpsilonSamplingPolicy,
    QQSummary,
    combined_interval,
    epsilon_resample,
    replicate_qq_summary,
)
from .domain import (
    ParameterDomain,
    PickFreezeDesign,
    PickFreezeSample,
    SurrogateEval,
    evaluate_pairs,
    freeze_inputs,
    sample_design,
)
from .models import (
    AnnealSchedule,
    LinearTestModel,
    SyntheticSurrogate,
    ToyDiffusion,
    analytic_sobol,
    anneal_bounds,
    brute_force_bounds,
    build_toy_diffusion,
    psi_ratio,
)
from .rb import (
    AffineEllipticModel,
    ReducedModel,
    SnapshotSet,
    build_snapshots,
    full_output,
    full_solve,
    make_full_evaluator,
    make_surrogate_evaluator,
    min_theta_coercivity,
    offline_reduce,
    online_solve,
    pod_basis,
    residual_dual_norm,
    residual_dual_norm_reference,
    surrogate_output,
)
from .sobol import (
    BootstrapReplicates,
    ConfidenceInterval,
    SobolEstimate,
    bc_interval,
    bootstrap_replicates,
    estimate_sobol,
    resample_indices,
    std_normal_cdf,
    std_normal_quantile,
)
from .tuning import (
    TuningModel,
    TuningSolution,
    estimate_Z,
    fit_error_decay,
    solve_optimal,
    tuning_table,
)
