import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptdp.errors import ConfigurationError, DimensionRangeError, InputError, ParameterError
from adaptdp.problem import (
    AveragingProjection,
    LinearProblem,
    NoiseModel,
    compute_svd,
    power_iteration_norm,
    sample_noisy_data,
    svd_projection,
)
from adaptdp.testproblems import make_problem


def test_svd_identity():
    s = compute_svd(np.eye(3))
    assert np.allclose(s.sigma, 1.0)
    assert np.allclose(np.abs(s.left), np.eye(3)[:, np.argmax(np.abs(s.left), axis=0)])
    assert np.allclose(s.left.T @ s.left, np.eye(3))


def test_svd_diagonal():
    s = compute_svd(np.diag([0.9, 0.5, 0.1]))
    assert np.allclose(s.sigma, [0.9, 0.5, 0.1])


def test_svd_reconstruction():
    A = np.random.default_rng(0).standard_normal((8, 8))
    s = compute_svd(A)
    assert np.linalg.norm(A - s.left @ np.diag(s.sigma) @ s.right.T) <= 1e-8


def test_svd_drops_negligible_modes():
    A = np.diag([1.0, 1e-3, 1e-16])
    assert compute_svd(A).rank == 2


def test_svd_rejects_nan():
    with pytest.raises(InputError):
        compute_svd(np.array([[1.0, np.nan], [0.0, 1.0]]))


def test_problem_validation():
    with pytest.raises(InputError):
        LinearProblem(np.ones((2, 3)), np.ones(3), np.ones(2))
    with pytest.raises(InputError):
        LinearProblem(np.eye(2), np.ones(2), np.zeros(2))
    with pytest.raises(InputError):
        LinearProblem(np.eye(2), np.ones(2), np.ones(2), operator_scale=0.0)


def test_problem_is_immutable():
    p = LinearProblem(np.eye(2), np.ones(2), np.ones(2))
    with pytest.raises(ValueError):
        p.matrix[0, 0] = 3.0


def test_power_iteration_upper_bound():
    rng = np.random.default_rng(2)
    for _ in range(20):
        A = rng.standard_normal((30, 30)) @ np.diag(rng.uniform(0, 1, 30))
        est = power_iteration_norm(A)
        true = np.linalg.norm(A, 2)
        assert est >= true
        assert est <= true * 1.01


def test_from_matrix_rescaling_bookkeeping():
    A = 5.0 * np.diag([1.0, 0.5, 0.25])
    p = LinearProblem.from_matrix(A, np.ones(3))
    assert np.linalg.norm(p.matrix, 2) <= 1.0
    assert np.allclose(p.operator_scale * p.matrix, A)
    assert np.isclose(p.scaled_delta(5.0), 5.0 / p.operator_scale)
    q = p.rescaled(2.0)
    assert np.allclose(q.operator_scale * q.matrix, A)


def test_zero_noise_is_exact():
    p = make_problem("deriv2", 16)
    assert np.array_equal(sample_noisy_data(p, NoiseModel(0.0)), p.exact_data)


def test_same_seed_same_noise():
    p = make_problem("deriv2", 16)
    a = sample_noisy_data(p, NoiseModel(0.1, seed=5))
    b = sample_noisy_data(p, NoiseModel(0.1, seed=5))
    assert np.array_equal(a, b)


@pytest.mark.parametrize("kind", ["gaussian", "rademacher", "student_t"])
def test_noise_unit_variance(kind):
    z = NoiseModel(1.0, kind, seed=3).standard_sample(4096)
    # chi-square concentration: sd of the sample variance is about sqrt(2/4096) (heavier for t)
    assert 0.9 <= np.var(z) <= 1.1


def test_noise_rejects_bad_parameters():
    with pytest.raises(ParameterError):
        NoiseModel(-1.0)
    with pytest.raises(ParameterError):
        NoiseModel(1.0, "laplace")
    with pytest.raises(ParameterError):
        NoiseModel(1.0, "student_t", df=2.0)


def test_unscaled_noise_level():
    A = 4.0 * np.eye(4)
    p = LinearProblem.from_matrix(A, np.ones(4))
    y = sample_noisy_data(p, NoiseModel(1.0, seed=0), unscaled=True)
    z = NoiseModel(1.0, seed=0).standard_sample(4)
    assert np.allclose(y - p.exact_data, z / p.operator_scale)


def test_averaging_example_unit_vector():
    P = AveragingProjection(8, 4)
    e1 = np.zeros(8)
    e1[0] = 1.0
    assert np.allclose(P.apply(e1), [1 / np.sqrt(2), 0, 0, 0])


def test_averaging_example_ones():
    assert np.allclose(AveragingProjection(8, 4).apply(np.ones(8)), np.full(4, np.sqrt(2)))


def test_averaging_rows_orthonormal_and_adjoint():
    P = AveragingProjection(32, 8)
    M = P.matrix()
    assert np.allclose(M @ M.T, np.eye(8))
    w = np.arange(8.0)
    assert np.allclose(P.adjoint(w), M.T @ w)


def test_averaging_divisibility():
    with pytest.raises(ConfigurationError):
        AveragingProjection(10, 4)


def test_averaging_white_noise_covariance():
    m, D, runs = 64, 256, 4000
    P = AveragingProjection(D, m)
    Z = np.random.default_rng(7).standard_normal((D, runs))
    C = np.cov(P.apply(Z))
    assert np.max(np.abs(C - np.eye(m))) <= 3 / np.sqrt(runs) * 2  # entries of a Wishart/N: sd ~ sqrt(2/N) on the diagonal


def test_projected_noise_isometry():
    D, m, N, delta = 128, 16, 500, 0.3
    P = AveragingProjection(D, m)
    sq = [np.sum(P.apply(delta * NoiseModel(1.0, seed=s).standard_sample(D)) ** 2) for s in range(N)]
    assert abs(np.mean(sq) - m * delta**2) <= 5 * delta**2 * np.sqrt(2 * m / N)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([1, 2, 4, 8, 16]))
def test_projections_non_expansive(seed, m):
    rng = np.random.default_rng(seed)
    y = rng.standard_normal(16)
    assert np.linalg.norm(AveragingProjection(16, m).apply(y)) <= np.linalg.norm(y) * (1 + 1e-12)
    system = compute_svd(rng.standard_normal((16, 16)))
    assert np.linalg.norm(svd_projection(system, m).apply(y)) <= np.linalg.norm(y) * (1 + 1e-12)


def test_svd_projection_examples():
    A = np.random.default_rng(1).standard_normal((6, 6))
    s = compute_svd(A)
    assert np.allclose(svd_projection(s, 1).apply(s.left[:, 0]), [1.0])
    assert np.allclose(svd_projection(s, 1).apply(s.left[:, 1]), [0.0], atol=1e-14)
    y = A @ np.ones(6)
    full = svd_projection(s, s.rank)
    assert np.linalg.norm(full.adjoint(full.apply(y)) - y) <= 1e-8
    with pytest.raises(DimensionRangeError):
        svd_projection(s, 7)
