"""Stochastic first-order oracles with controlled inexactness and noise.

An oracle, queried at a point, reports a deterministic (possibly shifted)
function value together with unbiased gradient samples whose deviation from
the true gradient is sub-Gaussian in the dual norm.  Two synthetic families
are shipped: a quadratic with additive Gaussian coordinate noise, whose
sub-Gaussian scale has a closed-form calibration, and a finite-sum logistic
loss sampled one term at a time, whose bounded deviations give a trivial
scale bound.

All randomness flows through the counter-addressed kernel streams in
``stmopt._kernels``: a draw is a pure function of (key, sample index), so
replays are exact and one trial's redraws never disturb another's.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ._kernels import normal_mean, normal_rows, uniform_indices
from .errors import DomainError

__all__ = [
    "OracleSample",
    "OracleSpec",
    "BatchGradient",
    "NoisyQuadratic",
    "FiniteSumLogistic",
    "sample",
    "minibatch_gradient",
    "exact_gradient",
    "calibrate_sigma_gaussian",
    "make_delta_inexact",
    "problem_to_dict",
    "problem_from_dict",
    "save_problem",
    "load_problem",
]


@dataclass(frozen=True)
class OracleSpec:
    """Constants of a stochastic oracle: inexactness, smoothness, noise scale."""

    lipschitz: float
    delta: float = 0.0
    sigma: float = 0.0

    def __post_init__(self) -> None:
        if self.lipschitz <= 0.0:
            raise ValueError(f"lipschitz must be > 0, got {self.lipschitz}")
        if self.delta < 0.0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")
        if self.sigma < 0.0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")


@dataclass(frozen=True)
class OracleSample:
    """One oracle reply: the reported value and a single gradient draw."""

    f_value: float
    grad_sample: np.ndarray


@dataclass(frozen=True)
class BatchGradient:
    """Mini-batch average of independent gradient draws at one point.

    ``samples_drawn`` counts the raw draws consumed to build the batch;
    it equals ``batch_size`` for plain averaging.
    """

    mean_grad: np.ndarray
    batch_size: int
    samples_drawn: int


class NoisyQuadratic:
    """f(y) = 0.5 y' S y - b' y with i.i.d. N(0, s^2) noise per gradient coordinate.

    S is symmetric positive semidefinite, so the exact Lipschitz constant of
    the gradient is the top eigenvalue and the curvature sandwich holds with
    equality structure that makes the oracle conditions checkable to float
    precision.
    """

    kind = "noisy_quadratic"

    def __init__(self, mat, b, noise_std: float = 0.0, seed: int = 0):
        mat = np.asarray(mat, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError(f"mat must be square, got shape {mat.shape}")
        if b.shape != (mat.shape[0],):
            raise ValueError("b must match the matrix dimension")
        if not np.allclose(mat, mat.T, atol=1e-12):
            raise ValueError("mat must be symmetric")
        if noise_std < 0.0:
            raise ValueError(f"noise_std must be >= 0, got {noise_std}")
        self.mat = mat
        self.b = b
        self.noise_std = float(noise_std)
        self.seed = int(seed)
        self._top_eig: float | None = None

    @classmethod
    def random(
        cls,
        dim: int,
        spectrum: tuple[float, float] = (0.1, 1.0),
        noise_std: float = 0.0,
        seed: int = 0,
        b_scale: float = 0.3,
    ) -> "NoisyQuadratic":
        """Random instance with prescribed eigenvalue range (top = spectrum[1])."""
        lo, hi = float(spectrum[0]), float(spectrum[1])
        if not (0.0 < lo <= hi):
            raise ValueError(f"spectrum must satisfy 0 < lo <= hi, got {spectrum}")
        rng = np.random.default_rng(seed)
        if dim == 1:
            eigs = np.array([hi])
        else:
            eigs = np.linspace(lo, hi, dim)
        basis, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        mat = (basis * eigs) @ basis.T
        mat = 0.5 * (mat + mat.T)
        b = b_scale * rng.standard_normal(dim)
        return cls(mat, b, noise_std=noise_std, seed=seed)

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    def check_domain(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.dim,):
            raise ValueError(f"point has shape {y.shape}, expected ({self.dim},)")
        if not np.all(np.isfinite(y)):
            raise DomainError("point has non-finite entries")
        return y

    def f_exact(self, y) -> float:
        y = self.check_domain(y)
        return 0.5 * float(y @ (self.mat @ y)) - float(self.b @ y)

    # Base problems report the exact value; inexactness comes from wrappers.
    f_reported = f_exact

    def exact_gradient(self, y) -> np.ndarray:
        return self.mat @ self.check_domain(y) - self.b

    def lipschitz(self) -> float:
        """Top eigenvalue of S (cached)."""
        if self._top_eig is None:
            self._top_eig = float(np.linalg.eigvalsh(self.mat)[-1])
        return self._top_eig

    def grad_rows(self, y, m: int, key) -> np.ndarray:
        exact = self.exact_gradient(y)
        if self.noise_std == 0.0:
            return np.tile(exact, (m, 1))
        return exact + self.noise_std * normal_rows(key, m, self.dim)

    def grad_mean(self, y, m: int, key) -> np.ndarray:
        exact = self.exact_gradient(y)
        if self.noise_std == 0.0:
            return exact
        return exact + self.noise_std * normal_mean(key, m, self.dim)

    def exact_surrogate(self) -> "NoisyQuadratic":
        return NoisyQuadratic(self.mat, self.b, noise_std=0.0, seed=self.seed)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "matrix": self.mat.tolist(),
            "b": self.b.tolist(),
            "noise_std": self.noise_std,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NoisyQuadratic":
        return cls(
            np.array(d["matrix"], dtype=np.float64),
            np.array(d["b"], dtype=np.float64),
            noise_std=float(d.get("noise_std", 0.0)),
            seed=int(d.get("seed", 0)),
        )


class FiniteSumLogistic:
    """Mean logistic loss over labelled rows, sampled one term at a time.

    f(y) = mean_i log(1 + exp(-l_i <a_i, y>)) with labels l_i in {-1, +1}.
    A gradient draw picks a term uniformly; deviations from the mean gradient
    are bounded, so any sigma at least twice the largest dual row norm
    satisfies the sub-Gaussian moment condition outright.
    """

    kind = "finite_sum_logistic"

    def __init__(self, features, labels, seed: int = 0):
        features = np.asarray(features, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.float64)
        if features.ndim != 2:
            raise ValueError("features must be a 2-d array")
        if labels.shape != (features.shape[0],):
            raise ValueError("labels must match the number of rows")
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        self.features = features
        self.labels = labels
        self.seed = int(seed)

    @classmethod
    def random(
        cls, n_terms: int, dim: int, seed: int = 0, scale: float = 1.0
    ) -> "FiniteSumLogistic":
        rng = np.random.default_rng(seed)
        labels = np.where(rng.random(n_terms) < 0.5, -1.0, 1.0)
        # Two softly separated clouds; keeps the optimum finite.
        centers = 0.5 * scale * labels[:, None] * np.ones(dim) / math.sqrt(dim)
        features = centers + scale * rng.standard_normal((n_terms, dim))
        return cls(features, labels, seed=seed)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_terms(self) -> int:
        return self.features.shape[0]

    def check_domain(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.dim,):
            raise ValueError(f"point has shape {y.shape}, expected ({self.dim},)")
        if not np.all(np.isfinite(y)):
            raise DomainError("point has non-finite entries")
        return y

    def f_exact(self, y) -> float:
        t = self.labels * (self.features @ self.check_domain(y))
        return float(np.logaddexp(0.0, -t).mean())

    f_reported = f_exact

    def _coef(self, t: np.ndarray, labels: np.ndarray) -> np.ndarray:
        # d/dz log(1 + exp(-z)) = -sigmoid(-z), with z = l * <a, y>.
        return -labels * expit(-labels * t)

    def exact_gradient(self, y) -> np.ndarray:
        y = self.check_domain(y)
        t = self.features @ y
        coef = self._coef(t, self.labels)
        return self.features.T @ coef / self.n_terms

    def lipschitz(self) -> float:
        gram = self.features.T @ self.features / (4.0 * self.n_terms)
        return float(np.linalg.eigvalsh(gram)[-1])

    def sigma_bound(self, dual_norm_fn) -> float:
        """A valid sub-Gaussian scale: twice the largest dual row norm."""
        return 2.0 * max(dual_norm_fn(row) for row in self.features)

    def grad_rows(self, y, m: int, key) -> np.ndarray:
        y = self.check_domain(y)
        idx = uniform_indices(key, m, self.n_terms)
        rows = self.features[idx]
        coef = self._coef(rows @ y, self.labels[idx])
        return rows * coef[:, None]

    def grad_mean(self, y, m: int, key) -> np.ndarray:
        # Index draws are lane-deterministic, so a vectorized mean is too.
        return self.grad_rows(y, m, key).mean(axis=0)

    def exact_surrogate(self) -> "_ExactSurrogate":
        return _ExactSurrogate(self)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "features": self.features.tolist(),
            "labels": self.labels.tolist(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FiniteSumLogistic":
        return cls(
            np.array(d["features"], dtype=np.float64),
            np.array(d["labels"], dtype=np.float64),
            seed=int(d.get("seed", 0)),
        )


class _ExactSurrogate:
    """Noise-free view of a problem: every draw is the exact gradient."""

    def __init__(self, base):
        self.base = base

    @property
    def dim(self) -> int:
        return self.base.dim

    def check_domain(self, y) -> np.ndarray:
        return self.base.check_domain(y)

    def f_exact(self, y) -> float:
        return self.base.f_exact(y)

    f_reported = f_exact

    def exact_gradient(self, y) -> np.ndarray:
        return self.base.exact_gradient(y)

    def grad_rows(self, y, m: int, key) -> np.ndarray:
        return np.tile(self.base.exact_gradient(y), (m, 1))

    def grad_mean(self, y, m: int, key) -> np.ndarray:
        return self.base.exact_gradient(y)

    def exact_surrogate(self) -> "_ExactSurrogate":
        return self


class DeltaShifted:
    """Wrapper reporting f - u*delta instead of f; gradients untouched.

    The constant downward shift keeps the reported value inside the
    [f - delta, f] band for any u in [0, 1], which is exactly the slack the
    curvature sandwich allows.
    """

    kind = "delta_shifted"

    def __init__(self, base, delta: float, shift_fraction: float = 0.5):
        if delta < 0.0:
            raise ValueError(f"delta must be >= 0, got {delta}")
        if not 0.0 <= shift_fraction <= 1.0:
            raise ValueError(
                f"shift_fraction must be in [0, 1], got {shift_fraction}"
            )
        self.base = base
        self.delta = float(delta)
        self.shift_fraction = float(shift_fraction)

    @property
    def dim(self) -> int:
        return self.base.dim

    def check_domain(self, y) -> np.ndarray:
        return self.base.check_domain(y)

    def f_exact(self, y) -> float:
        return self.base.f_exact(y)

    def f_reported(self, y) -> float:
        return self.base.f_reported(y) - self.shift_fraction * self.delta

    def exact_gradient(self, y) -> np.ndarray:
        return self.base.exact_gradient(y)

    def grad_rows(self, y, m: int, key) -> np.ndarray:
        return self.base.grad_rows(y, m, key)

    def grad_mean(self, y, m: int, key) -> np.ndarray:
        return self.base.grad_mean(y, m, key)

    def exact_surrogate(self):
        return self.base.exact_surrogate()

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "delta": self.delta,
            "shift_fraction": self.shift_fraction,
            "base": problem_to_dict(self.base),
        }


def sample(problem, y, key) -> OracleSample:
    """One oracle reply at y: reported value plus a single gradient draw."""
    y = problem.check_domain(y)
    row = problem.grad_rows(y, 1, key)[0]
    return OracleSample(f_value=problem.f_reported(y), grad_sample=row)


def minibatch_gradient(problem, y, m: int, key) -> BatchGradient:
    """Average of m independent gradient draws at y."""
    m = int(m)
    if m < 1:
        raise ValueError(f"batch size must be >= 1, got {m}")
    y = problem.check_domain(y)
    return BatchGradient(
        mean_grad=problem.grad_mean(y, m, key), batch_size=m, samples_drawn=m
    )


def exact_gradient(problem, y) -> np.ndarray:
    """The closed-form gradient; diagnostics only."""
    return problem.exact_gradient(y)


def calibrate_sigma_gaussian(noise_std: float, dim: int) -> float:
    """Smallest sub-Gaussian scale for N(0, s^2 I_n) noise under the l2 dual norm.

    Solving E exp(||g||^2 / sigma^2) = e through the Gaussian moment
    generating function (1 - 2 s^2 / sigma^2)^(-n/2) gives
    sigma^2 = 2 s^2 / (1 - exp(-2/n)).
    """
    if noise_std < 0.0:
        raise ValueError(f"noise_std must be >= 0, got {noise_std}")
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    if noise_std == 0.0:
        return 0.0
    return noise_std * math.sqrt(2.0 / (1.0 - math.exp(-2.0 / dim)))


def make_delta_inexact(problem, delta: float, shift_fraction: float = 0.5):
    """Wrap a problem so reported values sit delta*shift_fraction below truth.

    delta == 0 returns the problem unchanged.
    """
    if delta == 0.0:
        return problem
    return DeltaShifted(problem, delta, shift_fraction)


_KINDS = {
    NoisyQuadratic.kind: NoisyQuadratic.from_dict,
    FiniteSumLogistic.kind: FiniteSumLogistic.from_dict,
}


def problem_to_dict(problem) -> dict:
    return problem.to_dict()


def problem_from_dict(d: dict):
    kind = d.get("kind")
    if kind == DeltaShifted.kind:
        return DeltaShifted(
            problem_from_dict(d["base"]),
            float(d["delta"]),
            float(d.get("shift_fraction", 0.5)),
        )
    if kind not in _KINDS:
        raise ValueError(f"unknown problem kind {kind!r}")
    return _KINDS[kind](d)


def save_problem(problem, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(problem_to_dict(problem), fh, indent=2)


def load_problem(path):
    with open(path, "r", encoding="utf-8") as fh:
        return problem_from_dict(json.load(fh))
