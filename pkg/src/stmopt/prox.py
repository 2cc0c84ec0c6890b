"""Closed-form mirror-step subproblems and the three-point optimality check.

Each outer iteration minimizes ``V(x, u) + alpha * (<g, x> + h(x))`` over
the feasible set.  Only combinations with an exact closed-form argmin are
supported; keeping the subproblem exact keeps the method's convergence
argument literally true, so there is deliberately no inner iterative solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigurationError, DomainError
from .geometry import GeometrySetup, Norm, ProxFunction, bregman
from .geometry import norm as primal_norm
from .geometry import _as_vector

#: Values this close to zero are treated as exact zeros by the simplex
#: update; keeps iterates strictly interior after float underflow.
_SIMPLEX_FLOOR = 1e-300


class CompositeKind(Enum):
    ZERO = "zero"
    L1 = "l1"


@dataclass(frozen=True)
class CompositeTerm:
    """Composite objective term h(x): absent, or lam * ||x||_1."""

    kind: CompositeKind = CompositeKind.ZERO
    lam: float = 0.0

    def __post_init__(self) -> None:
        if self.lam < 0.0:
            raise ConfigurationError(f"l1 weight must be >= 0, got {self.lam}")
        if self.kind is CompositeKind.ZERO and self.lam != 0.0:
            raise ConfigurationError("zero composite cannot carry an l1 weight")

    @classmethod
    def zero(cls) -> "CompositeTerm":
        return cls(CompositeKind.ZERO, 0.0)

    @classmethod
    def l1(cls, lam: float) -> "CompositeTerm":
        return cls(CompositeKind.L1, float(lam))

    def value(self, x) -> float:
        if self.kind is CompositeKind.ZERO:
            return 0.0
        return self.lam * float(np.abs(np.asarray(x, dtype=np.float64)).sum())


class SetKind(Enum):
    ALL = "all"
    BOX = "box"
    BALL = "ball"
    SIMPLEX = "simplex"


@dataclass(frozen=True)
class FeasibleSet:
    """Feasible set Q: all of R^n, a coordinate box, an l2 ball, or the simplex."""

    kind: SetKind
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    center: np.ndarray | None = None
    radius: float | None = None

    @classmethod
    def everything(cls) -> "FeasibleSet":
        return cls(SetKind.ALL)

    @classmethod
    def box(cls, lo, hi) -> "FeasibleSet":
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ConfigurationError("box bounds must be vectors of equal length")
        if np.any(lo > hi):
            raise ConfigurationError("box bounds must satisfy lo <= hi")
        return cls(SetKind.BOX, lo=lo, hi=hi)

    @classmethod
    def ball(cls, center, radius: float) -> "FeasibleSet":
        center = np.asarray(center, dtype=np.float64)
        if center.ndim != 1:
            raise ConfigurationError("ball center must be a vector")
        if radius <= 0.0:
            raise ConfigurationError(f"ball radius must be > 0, got {radius}")
        return cls(SetKind.BALL, center=center, radius=float(radius))

    @classmethod
    def simplex(cls) -> "FeasibleSet":
        return cls(SetKind.SIMPLEX)

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=np.float64)
        if self.kind is SetKind.ALL:
            return bool(np.all(np.isfinite(x)))
        if self.kind is SetKind.BOX:
            return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))
        if self.kind is SetKind.BALL:
            return float(np.linalg.norm(x - self.center)) <= self.radius + tol
        return bool(
            np.all(x >= -tol) and abs(float(x.sum()) - 1.0) <= max(tol, 1e-12)
        )

    def anchor(self, dim: int) -> np.ndarray:
        """A canonical interior starting point of the set."""
        if self.kind is SetKind.ALL:
            return np.zeros(dim)
        if self.kind is SetKind.BOX:
            return 0.5 * (self.lo + self.hi)
        if self.kind is SetKind.BALL:
            return self.center.copy()
        return np.full(dim, 1.0 / dim)


def _validate_combo(g: GeometrySetup, q: FeasibleSet, h: CompositeTerm) -> None:
    if g.prox_kind is ProxFunction.NEG_ENTROPY:
        if q.kind is not SetKind.SIMPLEX:
            raise ConfigurationError("entropy geometry is valid only on the simplex")
        if h.kind is not CompositeKind.ZERO:
            raise ConfigurationError(
                "no closed-form simplex step with an l1 composite"
            )
    else:
        if q.kind is SetKind.SIMPLEX:
            raise ConfigurationError("simplex feasible set requires entropy geometry")
        if h.kind is CompositeKind.L1 and q.kind is not SetKind.ALL:
            raise ConfigurationError(
                "l1 composite is closed-form only on the unconstrained set"
            )


def soft_threshold(v: np.ndarray, t: float) -> np.ndarray:
    """Componentwise shrinkage sign(v) * max(|v| - t, 0)."""
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def prox_subproblem(
    g: GeometrySetup,
    q: FeasibleSet,
    h: CompositeTerm,
    u_prev,
    alpha: float,
    gtilde,
) -> np.ndarray:
    """Exact argmin over Q of ``V(x, u_prev) + alpha * (<gtilde, x> + h(x))``.

    Supported closed forms:

    * Euclidean, unconstrained, no composite: a plain gradient step.
    * Euclidean, unconstrained, l1 composite: soft thresholding.
    * Euclidean, box or ball, no composite: projected gradient step.
    * Entropy on the simplex, no composite: multiplicative weights,
      normalized with a max-shift so large steps cannot overflow.

    Anything else raises :class:`ConfigurationError`.
    """
    u_prev = _as_vector(g, u_prev, "u_prev")
    gtilde = _as_vector(g, gtilde, "gtilde")
    if alpha <= 0.0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    _validate_combo(g, q, h)

    if g.prox_kind is ProxFunction.NEG_ENTROPY:
        if np.any(u_prev <= 0.0):
            raise DomainError("u_prev must be strictly inside the simplex")
        logits = np.log(u_prev) - alpha * gtilde
        logits -= logits.max()
        w = np.exp(logits)
        w = np.maximum(w, _SIMPLEX_FLOOR)
        return w / w.sum()

    step = u_prev - alpha * gtilde
    if q.kind is SetKind.ALL:
        if h.kind is CompositeKind.L1:
            return soft_threshold(step, alpha * h.lam)
        return step
    if q.kind is SetKind.BOX:
        return np.clip(step, q.lo, q.hi)
    # Ball: radial projection.
    v = step - q.center
    dist = float(np.linalg.norm(v))
    if dist <= q.radius:
        return step
    return q.center + v * (q.radius / dist)


def three_point_check(
    g: GeometrySetup,
    q: FeasibleSet,
    h: CompositeTerm,
    z,
    alpha: float,
    gtilde,
    y,
    x_probe,
) -> float:
    """Residual of the three-point inequality at a probe point.

    With ``psi(x) = alpha * (<gtilde, x> + h(x))`` and ``y`` the exact
    minimizer of ``psi + V(., z)`` over Q, optimality implies

        psi(x) + V(x, z) >= psi(y) + V(y, z) + V(x, y)   for all x in Q.

    Returns the left side minus the right side; for a correct minimizer the
    residual is >= -1e-9 * (1 + scale), where scale is the sum of the
    magnitudes of the five terms involved.
    """
    z = _as_vector(g, z, "z")
    y = _as_vector(g, y, "y")
    x_probe = _as_vector(g, x_probe, "x_probe")
    if not q.contains(x_probe):
        raise DomainError("x_probe lies outside the feasible set")

    def psi(v: np.ndarray) -> float:
        return alpha * (float(gtilde @ v) + h.value(v))

    terms = (
        psi(x_probe),
        bregman(g, x_probe, z),
        psi(y),
        bregman(g, y, z),
        bregman(g, x_probe, y),
    )
    return terms[0] + terms[1] - terms[2] - terms[3] - terms[4]


def three_point_scale(
    g: GeometrySetup, q: FeasibleSet, h: CompositeTerm, z, alpha, gtilde, y, x_probe
) -> float:
    """Magnitude scale used in the three-point residual tolerance."""
    z = _as_vector(g, z, "z")
    y = _as_vector(g, y, "y")
    x_probe = _as_vector(g, x_probe, "x_probe")
    psi_x = alpha * (float(gtilde @ x_probe) + h.value(x_probe))
    psi_y = alpha * (float(gtilde @ y) + h.value(y))
    return (
        abs(psi_x)
        + abs(psi_y)
        + bregman(g, x_probe, z)
        + bregman(g, y, z)
        + bregman(g, x_probe, y)
    )


def domain_diameter(g: GeometrySetup, q: FeasibleSet) -> float:
    """Diameter bound R_Q of the set in the geometry's norm.

    The unconstrained set returns +inf; callers must then supply a finite
    bound explicitly since the method's guarantees need one.
    """
    if q.kind is SetKind.ALL:
        return math.inf
    if q.kind is SetKind.BOX:
        if g.norm_kind is not Norm.L2:
            raise ConfigurationError("box sets pair with Euclidean geometry")
        return primal_norm(g, q.hi - q.lo)
    if q.kind is SetKind.BALL:
        if g.norm_kind is not Norm.L2:
            raise ConfigurationError("ball sets pair with Euclidean geometry")
        return 2.0 * q.radius
    if g.norm_kind is not Norm.L1:
        raise ConfigurationError("simplex sets pair with entropy geometry")
    return 2.0
