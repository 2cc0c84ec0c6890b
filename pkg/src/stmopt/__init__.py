"""Adaptive stochastic similar-triangles solver for composite convex problems.

Bundles the solver (adaptive doubling/halving search over the Lipschitz
estimate, scheduled mini-batch gradient averaging, mirror steps in Euclidean
or entropy geometry), synthetic oracles with calibrated sub-Gaussian noise,
and a Monte Carlo harness that checks the method's large-deviation
guarantees over seeded ensembles.
"""

from .errors import ConfigurationError, DomainError
from .geometry import (
    GeometrySetup,
    Norm,
    ProxFunction,
    bregman,
    check_point,
    clamp_monitor,
    dual_norm,
    norm,
    regularity_constant,
)
from .oracle import (
    BatchGradient,
    FiniteSumLogistic,
    NoisyQuadratic,
    OracleSample,
    OracleSpec,
    calibrate_sigma_gaussian,
    exact_gradient,
    load_problem,
    make_delta_inexact,
    minibatch_gradient,
    sample,
    save_problem,
)
from .prox import (
    CompositeKind,
    CompositeTerm,
    FeasibleSet,
    SetKind,
    domain_diameter,
    prox_subproblem,
    soft_threshold,
    three_point_check,
)
from .solver import (
    CompositeProblem,
    DerivedParams,
    IterationTrace,
    SolverConfig,
    SolverResult,
    SolverState,
    StopReason,
    batch_size,
    compute_alpha,
    delta_threshold,
    derive_params,
    line_search_condition,
    oracle_call_bound,
    outer_step,
    solve,
    trace_csv_text,
    write_summary_json,
    write_trace_csv,
)
from .harness import (
    AggregateReport,
    ExperimentConfig,
    OracleCheckReport,
    RunRecord,
    check_lemma_growth,
    check_oracle_conditions,
    reference_optimum,
    run_ensemble,
)

__version__ = "0.1.0"
