"""Adaptive stochastic similar-triangles loop for composite problems.

One run fixes an iteration budget N and a concentration weight from the
target accuracy and confidence level, then repeats accepted steps of the
coupled (x, u, y) recurrence.  Every step, a trial Lipschitz estimate prices
a fresh mini-batch of gradient draws, a mirror step and a candidate point;
a stochastic descent test either accepts (and halves the estimate for the
next step) or doubles the estimate and redraws.  Batch sizes grow with the
step weight so the averaged noise stays within the accuracy budget.
"""

from __future__ import annotations

import io
import json
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigurationError, DomainError
from .geometry import GeometrySetup, check_point, regularity_constant
from .geometry import norm as primal_norm
from ._kernels import derive_key
from .oracle import minibatch_gradient
from .prox import CompositeTerm, FeasibleSet, domain_diameter, prox_subproblem

#: Relative slack on the right side of the descent test; guards against
#: spurious doublings on floating-point ties.
LINE_SEARCH_REL_SLACK = 1e-12

TRACE_HEADER = "k,L_k,alpha_k,A_k,m_k,inner_trials,f_gap,RQ2_over_A"


class StopReason(Enum):
    BUDGET_REACHED = "BudgetReached"
    EARLY_STOP_A_OVER_R = "EarlyStopAOverR"
    INNER_CAP_EXCEEDED = "InnerCapExceeded"


@dataclass
class SolverConfig:
    """Run parameters; `lipschitz` is the oracle's constant, `l0` the initial guess.

    `l0` defaults to `lipschitz`.  The method never verifies l0 <= lipschitz
    (its search only ever doubles), so an overstated l0 draws a warning
    rather than an error.
    """

    epsilon: float
    beta: float
    lipschitz: float
    r_q: float
    l0: float | None = None
    delta: float = 0.0
    sigma: float = 0.0
    seed: int = 0
    max_inner_doublings: int = 60
    early_stop: bool = True

    def __post_init__(self) -> None:
        if self.l0 is None:
            self.l0 = self.lipschitz
        self.validate()

    def validate(self) -> None:
        if not self.epsilon > 0.0:
            raise ConfigurationError(f"epsilon must be > 0, got {self.epsilon}")
        if not 0.0 < self.beta < 1.0:
            raise ConfigurationError(f"beta must be in (0, 1), got {self.beta}")
        if not self.lipschitz > 0.0:
            raise ConfigurationError(
                f"lipschitz must be > 0, got {self.lipschitz}"
            )
        if not self.l0 > 0.0:
            raise ConfigurationError(f"l0 must be > 0, got {self.l0}")
        if not (self.r_q > 0.0 and math.isfinite(self.r_q)):
            raise ConfigurationError(
                f"r_q must be finite and > 0, got {self.r_q}; unbounded feasible "
                "sets need an explicit diameter bound"
            )
        if self.delta < 0.0:
            raise ConfigurationError(f"delta must be >= 0, got {self.delta}")
        if self.sigma < 0.0:
            raise ConfigurationError(f"sigma must be >= 0, got {self.sigma}")
        if self.seed < 0:
            raise ConfigurationError(f"seed must be >= 0, got {self.seed}")
        if self.max_inner_doublings < 1:
            raise ConfigurationError("max_inner_doublings must be >= 1")
        if self.l0 > self.lipschitz:
            warnings.warn(
                f"l0={self.l0} exceeds lipschitz={self.lipschitz}; the search "
                "only doubles, so step counts may degrade",
                stacklevel=2,
            )


@dataclass(frozen=True)
class DerivedParams:
    """Budget and concentration weights fixed once per run."""

    n_steps: int
    omega: float
    omega_tilde: float
    kappa: float


@dataclass
class CompositeProblem:
    """A smooth oracle, a composite term, a feasible set and their geometry.

    Carries the known problem constants; `solver_config` turns them plus a
    target accuracy into a runnable configuration.  `reference_value`, when
    known, lets traces report true optimality gaps.
    """

    smooth: object
    geometry: GeometrySetup
    feasible: FeasibleSet
    composite: CompositeTerm
    lipschitz: float
    sigma: float = 0.0
    delta: float = 0.0
    r_q: float | None = None
    reference_value: float | None = None

    def diameter(self) -> float:
        if self.r_q is not None:
            return self.r_q
        d = domain_diameter(self.geometry, self.feasible)
        if not math.isfinite(d):
            raise ConfigurationError(
                "unbounded feasible set: supply r_q explicitly"
            )
        return d

    def objective(self, x) -> float:
        return self.smooth.f_exact(x) + self.composite.value(x)

    def solver_config(
        self, epsilon: float, beta: float, seed: int = 0, **overrides
    ) -> SolverConfig:
        kw = dict(
            epsilon=epsilon,
            beta=beta,
            lipschitz=self.lipschitz,
            r_q=self.diameter(),
            delta=self.delta,
            sigma=self.sigma,
            seed=seed,
        )
        kw.update(overrides)
        return SolverConfig(**kw)


@dataclass
class SolverState:
    """Mutable loop state; k counts accepted steps."""

    k: int
    a_big: float
    alpha_last: float
    x: np.ndarray
    u: np.ndarray
    y: np.ndarray
    l_trial: float
    j: int
    f_evals: int = 0
    grad_samples: int = 0
    l_accepted: list[float] = field(default_factory=list)

    @classmethod
    def initial(cls, x0: np.ndarray, l0: float) -> "SolverState":
        # Start the first search at half the guess so a benign landscape can
        # be accepted below l0.
        return cls(
            k=0,
            a_big=0.0,
            alpha_last=0.0,
            x=x0.copy(),
            u=x0.copy(),
            y=x0.copy(),
            l_trial=l0 / 2.0,
            j=0,
        )


@dataclass
class IterationTrace:
    """One accepted step; append-only."""

    k: int
    lipschitz: float
    alpha: float
    a_big: float
    batch: int
    inner_trials: int
    f_gap: float | None
    rq2_over_a: float


@dataclass
class SolverResult:
    x_final: np.ndarray
    trace: list[IterationTrace]
    stop_reason: StopReason
    grad_samples: int
    f_evals: int
    n_budget: int
    n_tilde: int | None
    final_gap: float | None
    params: DerivedParams

    def summary_dict(self) -> dict:
        return {
            "stop_reason": self.stop_reason.value,
            "M": self.grad_samples,
            "N": self.n_budget,
            "N_tilde": self.n_tilde,
            "final_gap": self.final_gap,
        }


def derive_params(cfg: SolverConfig, g: GeometrySetup) -> DerivedParams:
    """Fix the budget N and concentration weights for a run.

    N = ceil(2 sqrt(3) sqrt(L) R_Q / sqrt(eps)); the deviation weight is
    Omega = sqrt(6 ln(N / beta)), and the batch-size weight combines it with
    the geometry's regularity constant as 2k + 4 Omega sqrt(k) + 2 Omega^2.
    """
    n_steps = math.ceil(
        2.0 * math.sqrt(3.0) * math.sqrt(cfg.lipschitz) * cfg.r_q
        / math.sqrt(cfg.epsilon)
    )
    n_steps = max(n_steps, 1)
    if n_steps / cfg.beta <= 1.0:
        raise ConfigurationError(
            "N/beta <= 1: the tolerance is too loose for a meaningful run"
        )
    omega = math.sqrt(6.0 * math.log(n_steps / cfg.beta))
    kappa = regularity_constant(g)
    omega_tilde = 2.0 * kappa + 4.0 * omega * math.sqrt(kappa) + 2.0 * omega**2
    return DerivedParams(
        n_steps=n_steps, omega=omega, omega_tilde=omega_tilde, kappa=kappa
    )


def compute_alpha(a_prev: float, l_trial: float) -> float:
    """Positive root of L a^2 = A + a, so the new weight satisfies A+a = L a^2."""
    if a_prev < 0.0:
        raise ValueError(f"A must be >= 0, got {a_prev}")
    if l_trial <= 0.0:
        raise ValueError(f"L must be > 0, got {l_trial}")
    return (1.0 + math.sqrt(1.0 + 4.0 * a_prev * l_trial)) / (2.0 * l_trial)


def batch_size(
    sigma: float, omega_tilde: float, alpha: float, epsilon: float
) -> int:
    """ceil(3 sigma^2 Omega~ alpha / eps), clamped to at least one draw."""
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    raw = 3.0 * sigma * sigma * omega_tilde * alpha / epsilon
    return max(1, math.ceil(raw))


def line_search_condition(
    f_x_new: float,
    f_y: float,
    gtilde,
    x_new,
    y,
    l_trial: float,
    sigma: float,
    omega_tilde: float,
    m: int,
    delta: float,
    g: GeometrySetup,
) -> bool:
    """Stochastic descent test deciding whether a trial L is accepted.

    Accepts when the candidate's reported value does not exceed the linear
    model at y plus the trial curvature term, the averaged-noise allowance
    3 sigma^2 Omega~ / (L m), and the oracle slack delta.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if l_trial <= 0.0:
        raise ValueError(f"l_trial must be > 0, got {l_trial}")
    gtilde = np.asarray(gtilde, dtype=np.float64)
    diff = np.asarray(x_new, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    rhs = (
        f_y
        + float(gtilde @ diff)
        + 0.5 * l_trial * primal_norm(g, diff) ** 2
        + 3.0 * sigma * sigma * omega_tilde / (l_trial * m)
        + delta
    )
    return f_x_new <= rhs + LINE_SEARCH_REL_SLACK * abs(rhs)


def delta_threshold(epsilon: float, lipschitz: float, r_q: float) -> float:
    """Largest oracle inexactness compatible with the 4-eps guarantee."""
    if epsilon <= 0.0 or lipschitz <= 0.0 or r_q <= 0.0:
        raise ValueError("epsilon, lipschitz and r_q must all be > 0")
    return epsilon**1.5 / (6.0 * math.sqrt(3.0) * math.sqrt(lipschitz) * r_q)


def oracle_call_bound(cfg: SolverConfig, params: DerivedParams) -> float:
    """Closed-form cap on total gradient draws for an early-stopped run.

    (4 + log2(3 L / L0)) * (2 sqrt(3) sqrt(L) R_Q / sqrt(eps)
                            + 21 sigma^2 Omega~ R_Q^2 / eps^2 + 1).
    Log base 2 matches the doubling search.
    """
    factor = 4.0 + math.log2(3.0 * cfg.lipschitz / cfg.l0)
    steps_term = (
        2.0 * math.sqrt(3.0) * math.sqrt(cfg.lipschitz) * cfg.r_q
        / math.sqrt(cfg.epsilon)
    )
    noise_term = (
        21.0 * cfg.sigma**2 * params.omega_tilde * cfg.r_q**2 / cfg.epsilon**2
    )
    return factor * (steps_term + noise_term + 1.0)


def outer_step(
    state: SolverState,
    problem: CompositeProblem,
    cfg: SolverConfig,
    params: DerivedParams,
    run_seed: int,
) -> IterationTrace | None:
    """Inner trial loop for one accepted step; None when the doubling cap hits.

    Each trial recomputes the step weight, the coupling point y, the batch
    size and a fresh mini-batch (its own substream keyed by (seed, step,
    trial), so redraws after a failed trial are independent), then the
    mirror step and candidate.  Failure doubles the trial L and repeats;
    success commits the candidates and halves L for the next step.
    """
    geom = problem.geometry
    a_prev = state.a_big
    l_trial = state.l_trial
    j = state.j
    while True:
        alpha = compute_alpha(a_prev, l_trial)
        a_new = a_prev + alpha
        y = (alpha * state.u + a_prev * state.x) / a_new
        m = batch_size(cfg.sigma, params.omega_tilde, alpha, cfg.epsilon)
        key = derive_key(run_seed, state.k, j)
        batch = minibatch_gradient(problem.smooth, y, m, key)
        u_cand = prox_subproblem(
            geom, problem.feasible, problem.composite, state.u, alpha,
            batch.mean_grad,
        )
        x_cand = (alpha * u_cand + a_prev * state.x) / a_new
        f_y = problem.smooth.f_reported(y)
        f_x = problem.smooth.f_reported(x_cand)
        state.f_evals += 2
        state.grad_samples += m
        if line_search_condition(
            f_x, f_y, batch.mean_grad, x_cand, y, l_trial,
            cfg.sigma, params.omega_tilde, m, cfg.delta, geom,
        ):
            state.x = x_cand
            state.u = u_cand
            state.y = y
            state.a_big = a_new
            state.alpha_last = alpha
            state.k += 1
            state.l_accepted.append(l_trial)
            state.l_trial = l_trial / 2.0
            state.j = 0
            gap = None
            if problem.reference_value is not None:
                gap = problem.objective(x_cand) - problem.reference_value
            return IterationTrace(
                k=state.k,
                lipschitz=l_trial,
                alpha=alpha,
                a_big=a_new,
                batch=m,
                inner_trials=j + 1,
                f_gap=gap,
                rq2_over_a=cfg.r_q**2 / a_new,
            )
        l_trial *= 2.0
        j += 1
        if j > cfg.max_inner_doublings:
            # Leave the failed trial visible for diagnostics.
            state.l_trial = l_trial
            state.j = j
            return None


def solve(problem: CompositeProblem, cfg: SolverConfig, x0) -> SolverResult:
    """Run the loop from x0 until the budget, an early stop, or the inner cap.

    Initialization follows the zero-step of the scheme: y = u = x0, weights
    at zero, and the first trial Lipschitz estimate at l0 / 2.  With
    early_stop on (default), the run ends at the first accepted step whose
    R_Q^2 / A drops to the target accuracy, a sufficient certificate for an
    eps-solution; the budget N stays a hard cap either way.
    """
    cfg.validate()
    x0 = check_point(problem.geometry, x0, "x0")
    if not problem.feasible.contains(x0):
        raise DomainError("x0 lies outside the feasible set")
    params = derive_params(cfg, problem.geometry)
    thr = delta_threshold(cfg.epsilon, cfg.lipschitz, cfg.r_q)
    if cfg.delta > thr:
        warnings.warn(
            f"delta={cfg.delta:.3g} exceeds the inexactness budget "
            f"{thr:.3g}; the 4*eps guarantee no longer applies",
            stacklevel=2,
        )

    state = SolverState.initial(x0, cfg.l0)
    trace: list[IterationTrace] = []
    stop = StopReason.BUDGET_REACHED
    n_tilde: int | None = None
    for _ in range(params.n_steps):
        row = outer_step(state, problem, cfg, params, cfg.seed)
        if row is None:
            stop = StopReason.INNER_CAP_EXCEEDED
            break
        trace.append(row)
        if n_tilde is None and row.rq2_over_a <= cfg.epsilon:
            n_tilde = row.k - 1
        if cfg.early_stop and row.rq2_over_a <= cfg.epsilon:
            stop = StopReason.EARLY_STOP_A_OVER_R
            break
    return SolverResult(
        x_final=state.x.copy(),
        trace=trace,
        stop_reason=stop,
        grad_samples=state.grad_samples,
        f_evals=state.f_evals,
        n_budget=params.n_steps,
        n_tilde=n_tilde,
        final_gap=trace[-1].f_gap if trace else None,
        params=params,
    )


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def trace_csv_text(rows: list[IterationTrace]) -> str:
    """Render trace rows as CSV with 17 significant digits per float."""
    buf = io.StringIO()
    buf.write(TRACE_HEADER + "\n")
    for r in rows:
        gap = "" if r.f_gap is None else _fmt(r.f_gap)
        buf.write(
            f"{r.k},{_fmt(r.lipschitz)},{_fmt(r.alpha)},{_fmt(r.a_big)},"
            f"{r.batch},{r.inner_trials},{gap},{_fmt(r.rq2_over_a)}\n"
        )
    return buf.getvalue()


def write_trace_csv(rows: list[IterationTrace], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(trace_csv_text(rows))


def write_summary_json(result: SolverResult, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(result.summary_dict(), fh, indent=2)
        fh.write("\n")
