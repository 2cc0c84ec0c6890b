"""Stochastic oracles: unbiasedness, noise calibration, inexactness sandwich."""

import math

import numpy as np
import pytest

from stmopt import DomainError
from stmopt._kernels import derive_key
from stmopt.geometry import GeometrySetup
from stmopt.oracle import (
    FiniteSumLogistic,
    NoisyQuadratic,
    calibrate_sigma_gaussian,
    exact_gradient,
    load_problem,
    make_delta_inexact,
    minibatch_gradient,
    problem_from_dict,
    problem_to_dict,
    sample,
    save_problem,
)


def _quadratic(dim=6, noise_std=0.3, seed=5):
    return NoisyQuadratic.random(dim=dim, noise_std=noise_std, seed=seed)


def test_zero_noise_sample_is_exact():
    prob = _quadratic(noise_std=0.0)
    y = np.linspace(-1.0, 1.0, prob.dim)
    got = sample(prob, y, derive_key(0, 0, 0))
    assert np.array_equal(got.grad_sample, prob.mat @ y - prob.b)
    assert got.f_value == prob.f_exact(y)


def test_sample_mean_clt_band():
    # Empirical mean of 1e5 draws within 4 * s * sqrt(n / 1e5) of the truth.
    prob = _quadratic(dim=6, noise_std=0.3)
    y = np.full(6, 0.25)
    rows = prob.grad_rows(y, 100_000, derive_key(1, 2, 3))
    err = np.linalg.norm(rows.mean(axis=0) - prob.exact_gradient(y))
    assert err <= 4.0 * 0.3 * math.sqrt(6 / 100_000)


def test_single_row_logistic_sample_is_full_gradient():
    prob = FiniteSumLogistic(np.array([[0.5, -1.0]]), np.array([1.0]))
    y = np.array([0.3, 0.7])
    got = sample(prob, y, derive_key(0))
    assert np.allclose(got.grad_sample, prob.exact_gradient(y), rtol=0, atol=0)


def test_minibatch_of_one_equals_sample():
    prob = _quadratic()
    y = np.zeros(prob.dim)
    key = derive_key(9, 9)
    one = minibatch_gradient(prob, y, 1, key)
    assert one.mean_grad.tobytes() == sample(prob, y, key).grad_sample.tobytes()
    assert one.batch_size == 1 and one.samples_drawn == 1


def test_minibatch_golden_value():
    # Frozen at first run; guards the draw scheme end to end.
    prob = NoisyQuadratic(
        np.array([[1.0, 0.2], [0.2, 0.5]]), np.array([0.3, -0.7]), noise_std=0.25
    )
    bg = minibatch_gradient(prob, np.array([0.4, -1.1]), 16, derive_key(2024, 0, 0))
    expected = np.array(
        [
            float.fromhex("-0x1.ba205841d8b16p-3"),
            float.fromhex("0x1.0d704ff28d570p-2"),
        ]
    )
    assert bg.mean_grad.tobytes() == expected.tobytes()


def test_minibatch_rejects_zero():
    with pytest.raises(ValueError):
        minibatch_gradient(_quadratic(), np.zeros(6), 0, derive_key(0))


def test_minibatch_mean_matches_rows():
    prob = _quadratic(noise_std=0.4)
    y = np.full(prob.dim, -0.2)
    key = derive_key(3, 1)
    rows = prob.grad_rows(y, 64, key)
    fused = prob.grad_mean(y, 64, key)
    assert np.allclose(fused, rows.mean(axis=0), rtol=1e-13, atol=1e-15)


def test_determinism_and_stream_separation():
    prob = _quadratic(noise_std=0.2)
    y = np.zeros(6)
    a = minibatch_gradient(prob, y, 32, derive_key(7, 0, 0)).mean_grad
    b = minibatch_gradient(prob, y, 32, derive_key(7, 0, 0)).mean_grad
    c = minibatch_gradient(prob, y, 32, derive_key(7, 0, 1)).mean_grad
    assert a.tobytes() == b.tobytes()
    assert a.tobytes() != c.tobytes()


def test_domain_errors():
    prob = _quadratic()
    with pytest.raises(DomainError):
        sample(prob, np.full(6, np.nan), derive_key(0))
    with pytest.raises(ValueError):
        sample(prob, np.zeros(5), derive_key(0))


# ---------------------------------------------------------------------------
# Sigma calibration
# ---------------------------------------------------------------------------

def test_calibrate_sigma_examples():
    assert calibrate_sigma_gaussian(0.0, 7) == 0.0
    # Frozen closed-form values (30-digit evaluation).
    assert calibrate_sigma_gaussian(1.0, 1) ** 2 == pytest.approx(
        2.3130352854993313, rel=1e-14
    )
    assert calibrate_sigma_gaussian(0.1, 10) ** 2 == pytest.approx(
        0.11033311132253990, rel=1e-14
    )
    with pytest.raises(ValueError):
        calibrate_sigma_gaussian(-1.0, 3)
    with pytest.raises(ValueError):
        calibrate_sigma_gaussian(1.0, 0)


@pytest.mark.parametrize("dim,noise_std", [(1, 1.0), (10, 0.1)])
def test_calibrated_moment_monte_carlo(dim, noise_std):
    # Independent route: numpy's own normal generator, not the kernel lanes.
    sigma = calibrate_sigma_gaussian(noise_std, dim)
    rng = np.random.default_rng(12345)
    g = noise_std * rng.standard_normal((1_000_000, dim))
    moment = np.exp((g**2).sum(axis=1) / sigma**2).mean()
    assert moment <= math.e * 1.05
    if dim >= 10:  # second moment finite here, so two-sided holds
        assert moment >= math.e * 0.95


def test_st2_moment_with_kernel_draws():
    prob = _quadratic(dim=10, noise_std=0.2)
    sigma = calibrate_sigma_gaussian(0.2, 10)
    y = np.zeros(10)
    rows = prob.grad_rows(y, 100_000, derive_key(5, 5))
    sq = ((rows - prob.exact_gradient(y)) ** 2).sum(axis=1)
    assert np.exp(sq / sigma**2).mean() <= math.e * 1.05


def test_logistic_sigma_bound_trivially_sub_gaussian():
    prob = FiniteSumLogistic.random(n_terms=40, dim=4, seed=3)
    geometry = GeometrySetup.euclidean(4)
    from stmopt.geometry import dual_norm

    sigma = prob.sigma_bound(lambda v: dual_norm(geometry, v))
    y = np.array([0.1, -0.2, 0.3, 0.0])
    rows = prob.grad_rows(y, 20_000, derive_key(8))
    sq = ((rows - prob.exact_gradient(y)) ** 2).sum(axis=1)
    assert sq.max() <= sigma**2  # bounded deviations
    assert np.exp(sq / sigma**2).mean() <= math.e


# ---------------------------------------------------------------------------
# Exact gradients and finite differences
# ---------------------------------------------------------------------------

@pytest.mark.parametrize(
    "prob,y",
    [
        (_quadratic(noise_std=0.0), np.array([0.3, -0.5, 0.1, 0.9, -0.2, 0.4])),
        (
            FiniteSumLogistic.random(n_terms=25, dim=4, seed=11),
            np.array([0.2, -0.4, 0.6, -0.1]),
        ),
    ],
)
def test_exact_gradient_matches_finite_differences(prob, y):
    grad = exact_gradient(prob, y)
    h = 1e-6
    for i in range(len(y)):
        e = np.zeros_like(y)
        e[i] = h
        fd = (prob.f_exact(y + e) - prob.f_exact(y - e)) / (2.0 * h)
        assert fd == pytest.approx(grad[i], rel=1e-5, abs=1e-9)


def test_quadratic_exact_gradient_at_zero():
    prob = _quadratic(noise_std=0.0)
    assert np.array_equal(exact_gradient(prob, np.zeros(6)), -prob.b)


def test_logistic_exact_gradient_is_term_average():
    prob = FiniteSumLogistic.random(n_terms=30, dim=3, seed=2)
    y = np.array([0.5, -0.3, 0.2])
    per_term = np.array(
        [
            FiniteSumLogistic(
                prob.features[i : i + 1], prob.labels[i : i + 1]
            ).exact_gradient(y)
            for i in range(prob.n_terms)
        ]
    )
    assert np.allclose(per_term.mean(axis=0), prob.exact_gradient(y), rtol=1e-12)


def test_logistic_draws_are_terms_and_unbiased():
    prob = FiniteSumLogistic.random(n_terms=15, dim=3, seed=6)
    y = np.array([0.1, 0.2, -0.3])
    rows = prob.grad_rows(y, 60_000, derive_key(21))
    err = np.abs(rows.mean(axis=0) - prob.exact_gradient(y))
    se = rows.std(axis=0, ddof=1) / math.sqrt(60_000)
    assert np.all(err <= 5.0 * se)


# ---------------------------------------------------------------------------
# Delta inexactness
# ---------------------------------------------------------------------------

def test_delta_zero_is_identity():
    prob = _quadratic()
    assert make_delta_inexact(prob, 0.0) is prob


def test_delta_full_shift():
    prob = _quadratic(noise_std=0.0)
    wrapped = make_delta_inexact(prob, 0.1, shift_fraction=1.0)
    y = np.full(6, 0.3)
    assert wrapped.f_reported(y) == pytest.approx(prob.f_exact(y) - 0.1, abs=1e-15)
    assert wrapped.f_exact(y) == prob.f_exact(y)
    assert np.array_equal(wrapped.exact_gradient(y), prob.exact_gradient(y))


def test_delta_sandwich_on_random_pairs():
    prob = _quadratic(noise_std=0.0, dim=5)
    lips = prob.lipschitz()
    delta = 0.05
    wrapped = make_delta_inexact(prob, delta, shift_fraction=0.7)
    rng = np.random.default_rng(17)
    for _ in range(1000):
        x, y = rng.standard_normal((2, 5)) * 2.0
        resid = wrapped.f_exact(x) - wrapped.f_reported(y) - float(
            wrapped.exact_gradient(y) @ (x - y)
        )
        assert resid >= -1e-9
        assert resid <= 0.5 * lips * float((x - y) @ (x - y)) + delta + 1e-9
        # Reported value stays inside the [f - delta, f] band.
        fy = wrapped.f_exact(y)
        assert fy - delta - 1e-15 <= wrapped.f_reported(y) <= fy + 1e-15


def test_delta_wrapper_validation():
    with pytest.raises(ValueError):
        make_delta_inexact(_quadratic(), -0.1)
    with pytest.raises(ValueError):
        make_delta_inexact(_quadratic(), 0.1, shift_fraction=1.5)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def test_problem_json_round_trip(tmp_path):
    for prob in (
        _quadratic(noise_std=0.15, seed=9),
        FiniteSumLogistic.random(n_terms=12, dim=3, seed=4),
        make_delta_inexact(_quadratic(seed=2), 0.02),
    ):
        path = tmp_path / "prob.json"
        save_problem(prob, path)
        back = load_problem(path)
        y = np.zeros(prob.dim) if prob.dim != 3 else np.array([0.1, 0.2, 0.3])
        assert back.f_reported(y) == prob.f_reported(y)
        assert np.array_equal(back.exact_gradient(y), prob.exact_gradient(y))
        key = derive_key(1, 2)
        assert (
            back.grad_rows(y, 5, key).tobytes()
            == prob.grad_rows(y, 5, key).tobytes()
        )


def test_problem_dict_rejects_unknown_kind():
    with pytest.raises(ValueError):
        problem_from_dict({"kind": "mystery"})


def test_problem_dict_payload_shape():
    d = problem_to_dict(_quadratic(dim=3, seed=1))
    assert d["kind"] == "noisy_quadratic"
    assert len(d["matrix"]) == 3 and len(d["matrix"][0]) == 3
    assert isinstance(d["seed"], int)


def test_surrogate_strips_noise_and_shift():
    prob = make_delta_inexact(_quadratic(noise_std=0.5, seed=8), 0.1)
    surr = prob.exact_surrogate()
    y = np.full(6, 0.2)
    assert surr.f_reported(y) == surr.f_exact(y)
    rows = surr.grad_rows(y, 4, derive_key(0))
    assert np.allclose(rows, surr.exact_gradient(y), rtol=0, atol=0)
