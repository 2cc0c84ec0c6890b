"""Norms, prox-functions and Bregman divergences for the two shipped geometries.

Euclidean geometry pairs the l2 norm with the half-squared-distance
prox-function on R^n (and its boxes and balls); entropy geometry pairs the
l1 norm with negative entropy on the probability simplex, where the Bregman
divergence is the KL divergence.  The two cover both regimes of the dual
norm's regularity constant while keeping every mirror step closed-form.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigurationError, DomainError

#: Absolute tolerance on "coordinates sum to one" for simplex points.
SIMPLEX_SUM_TOL = 1e-12

#: Coordinates below this floor are clamped before logs so divergences stay
#: finite; see :data:`clamp_monitor`.
ENTROPY_CLAMP_FLOOR = 1e-300


class Norm(Enum):
    L2 = "l2"
    L1 = "l1"


class ProxFunction(Enum):
    EUCLIDEAN_HALF_SQ = "euclidean_half_sq"
    NEG_ENTROPY = "neg_entropy"


class ClampMonitor:
    """Counts how often the entropy-domain guard clamped a coordinate.

    The guard replaces coordinates below ``ENTROPY_CLAMP_FLOOR`` inside log
    arguments instead of letting the divergence return -inf.  Recording each
    event keeps the guard observable rather than silent.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.count = 0

    def record(self, n: int = 1) -> None:
        with self._lock:
            self.count += n

    def reset(self) -> None:
        with self._lock:
            self.count = 0

    @property
    def fired(self) -> bool:
        return self.count > 0


#: Process-wide guard counter for entropy-domain clamping.
clamp_monitor = ClampMonitor()


@dataclass(frozen=True)
class GeometrySetup:
    """Ambient dimension plus the (norm, prox-function) pair.

    The pairing is fixed: the l2 norm goes with the Euclidean prox on R^n,
    the l1 norm with negative entropy, valid only on the simplex.
    """

    dim: int
    norm_kind: Norm
    prox_kind: ProxFunction

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ConfigurationError(f"dim must be >= 1, got {self.dim}")
        valid = (
            (Norm.L2, ProxFunction.EUCLIDEAN_HALF_SQ),
            (Norm.L1, ProxFunction.NEG_ENTROPY),
        )
        if (self.norm_kind, self.prox_kind) not in valid:
            raise ConfigurationError(
                "unsupported pairing: l2 requires the Euclidean prox, "
                "l1 requires negative entropy"
            )

    @classmethod
    def euclidean(cls, dim: int) -> "GeometrySetup":
        return cls(dim, Norm.L2, ProxFunction.EUCLIDEAN_HALF_SQ)

    @classmethod
    def simplex_entropy(cls, dim: int) -> "GeometrySetup":
        return cls(dim, Norm.L1, ProxFunction.NEG_ENTROPY)

    @property
    def is_entropy(self) -> bool:
        return self.prox_kind is ProxFunction.NEG_ENTROPY


def _as_vector(g: GeometrySetup, x, name: str = "x") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (g.dim,):
        raise ValueError(f"{name} has shape {x.shape}, expected ({g.dim},)")
    return x


def _check_simplex(g: GeometrySetup, x: np.ndarray, name: str) -> None:
    if np.any(x < 0.0):
        raise DomainError(f"{name} has negative coordinates; not on the simplex")
    if abs(float(x.sum()) - 1.0) > SIMPLEX_SUM_TOL:
        raise DomainError(
            f"{name} sums to {float(x.sum()):.17g}; not on the simplex"
        )


def check_point(g: GeometrySetup, x, name: str = "point") -> np.ndarray:
    """Validate a point of this geometry and return it as a float64 vector.

    Entries must be finite; for entropy geometry the point must lie on the
    probability simplex.
    """
    x = _as_vector(g, x, name)
    if not np.all(np.isfinite(x)):
        raise DomainError(f"{name} has non-finite entries")
    if g.is_entropy:
        _check_simplex(g, x, name)
    return x


def norm(g: GeometrySetup, x) -> float:
    """Primal norm ||x|| of the geometry (l2 or l1)."""
    x = _as_vector(g, x)
    if g.norm_kind is Norm.L2:
        return float(np.linalg.norm(x))
    return float(np.abs(x).sum())


def dual_norm(g: GeometrySetup, lam) -> float:
    """Dual norm, the max of <lam, v> over ||v|| <= 1.

    l2 is self-dual; the dual of l1 is the max-magnitude norm.
    """
    lam = _as_vector(g, lam, "lam")
    if g.norm_kind is Norm.L2:
        return float(np.linalg.norm(lam))
    return float(np.abs(lam).max())


def bregman(g: GeometrySetup, x, y) -> float:
    """Bregman divergence V(x, y) = d(x) - d(y) - <grad d(y), x - y>.

    Euclidean prox: 0.5 * ||x - y||_2^2.  Negative entropy: the KL
    divergence sum_i x_i * log(x_i / y_i); both points must lie on the
    simplex and y strictly inside it (a zero coordinate of y makes the
    divergence undefined and raises :class:`DomainError`).  Coordinates of
    x on the boundary contribute zero, matching the x*log(x) limit.
    """
    x = _as_vector(g, x)
    y = _as_vector(g, y, "y")
    if g.prox_kind is ProxFunction.EUCLIDEAN_HALF_SQ:
        d = x - y
        return 0.5 * float(d @ d)
    _check_simplex(g, x, "x")
    _check_simplex(g, y, "y")
    if np.any(y <= 0.0):
        raise DomainError("y touches the simplex boundary; KL divergence undefined")
    n_clamped = int(
        np.count_nonzero(x < ENTROPY_CLAMP_FLOOR)
        + np.count_nonzero(y < ENTROPY_CLAMP_FLOOR)
    )
    if n_clamped:
        clamp_monitor.record(n_clamped)
    xc = np.maximum(x, ENTROPY_CLAMP_FLOOR)
    yc = np.maximum(y, ENTROPY_CLAMP_FLOOR)
    # Multiply by the unclamped x so boundary coordinates contribute exactly 0.
    val = float(x @ np.log(xc / yc))
    return max(val, 0.0)


def regularity_constant(g: GeometrySetup) -> float:
    """Concentration constant of the dual norm.

    1 for the self-dual l2 case; 2*ln(dim) when the dual norm is
    max-magnitude (the q -> infinity member of the l_q family), clamped to 1
    so the constant never drops below the Euclidean value in dimension one.
    """
    if g.norm_kind is Norm.L2:
        return 1.0
    return max(1.0, 2.0 * math.log(g.dim))
