"""Discretised linear problems, singular systems, data projections and noise."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Literal

import numpy as np

from adaptdp.errors import ConfigurationError, DimensionRangeError, InputError, ParameterError

NoiseKind = Literal["gaussian", "rademacher", "student_t"]

# relative cut below which singular values are dropped from the rank
RANK_CUTOFF = 1e-14


def power_iteration_norm(matrix, tol=1e-6, maxiter=500, seed=0):
    """Estimate the spectral norm of ``matrix`` by power iteration on ``A^T A``.

    Iteration stops once the relative change of the estimate drops below
    ``tol`` or after ``maxiter`` sweeps. Power iteration approaches the norm
    from below with geometrically shrinking steps, so the returned value adds
    the geometric tail of the remaining steps and a further factor
    ``1 + tol``; this keeps ``||A / estimate|| <= 1``.
    """
    A = np.asarray(matrix, dtype=float)
    if A.size == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(A.shape[1])
    v /= np.linalg.norm(v)
    estimate = 0.0
    change = prev_change = np.inf
    for _ in range(maxiter):
        w = A.T @ (A @ v)
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            return 0.0
        new_estimate = float(np.sqrt(v @ w))
        v = w / norm_w
        prev_change, change = change, abs(new_estimate - estimate)
        estimate = max(estimate, new_estimate)
        if change <= tol * estimate:
            break
    rate = change / prev_change if np.isfinite(prev_change) and prev_change > 0 else 0.0
    tail = change * rate / (1.0 - rate) if rate < 1.0 else tol * estimate
    return (estimate + tail) * (1.0 + tol)


@dataclass(frozen=True, eq=False)
class LinearProblem:
    """Dense discretised problem ``A x = y`` with known exact solution.

    ``matrix`` and ``exact_data`` are stored in rescaled units (operator
    norm at most one); ``operator_scale`` is the factor they were divided by,
    so the unscaled operator is ``operator_scale * matrix``. Noise levels are
    quoted for the rescaled problem; levels given in unscaled units convert
    via :meth:`scaled_delta`.
    """

    matrix: np.ndarray
    exact_solution: np.ndarray
    exact_data: np.ndarray
    operator_scale: float = 1.0
    name: str = "problem"

    def __post_init__(self):
        A = np.asarray(self.matrix, dtype=float)
        x = np.asarray(self.exact_solution, dtype=float)
        y = np.asarray(self.exact_data, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise InputError(f"matrix must be square, got shape {A.shape}")
        if x.shape != (A.shape[1],) or y.shape != (A.shape[0],):
            raise InputError("solution/data lengths do not match the matrix")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InputError("non-finite entries in problem data")
        if not self.operator_scale > 0:
            raise InputError("operator_scale must be positive")
        if np.linalg.norm(A @ x - y) > 1e-10 * max(1.0, np.linalg.norm(y)):
            raise InputError("exact data is not consistent with A x")
        for arr in (A, x, y):
            arr.setflags(write=False)
        object.__setattr__(self, "matrix", A)
        object.__setattr__(self, "exact_solution", x)
        object.__setattr__(self, "exact_data", y)

    @classmethod
    def from_matrix(cls, matrix, exact_solution, name="problem", normalise=True):
        """Build a problem with ``y = A x``; optionally rescale to ``||A|| <= 1``.

        The norm is estimated by power iteration. The rescaling is applied
        only when it shrinks the operator or when ``normalise`` is forced.
        """
        A = np.array(matrix, dtype=float)
        if not np.all(np.isfinite(A)):
            raise InputError("non-finite entries in matrix")
        x = np.array(exact_solution, dtype=float)
        scale = 1.0
        if normalise:
            scale = power_iteration_norm(A)
            if scale <= 0:
                raise InputError("zero operator")
            A = A / scale
        return cls(A, x, A @ x, operator_scale=scale, name=name)

    @property
    def dimension(self):
        return self.matrix.shape[0]

    def scaled_delta(self, delta):
        """Noise level in the rescaled units of :attr:`matrix`."""
        return delta / self.operator_scale

    def rescaled(self, factor):
        """Return the problem with operator and data divided by ``factor``."""
        return LinearProblem(
            self.matrix / factor,
            self.exact_solution,
            self.exact_data / factor,
            operator_scale=self.operator_scale * factor,
            name=self.name,
        )


@dataclass(frozen=True, eq=False)
class SingularSystem:
    """Ordered singular triples; ``left[:, j]`` and ``right[:, j]`` pair with ``sigma[j]``."""

    sigma: np.ndarray
    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.sigma, dtype=float)
        if s.ndim != 1:
            raise InputError("sigma must be one-dimensional")
        if np.any(s <= 0):
            raise InputError("singular values must be strictly positive")
        if np.any(np.diff(s) > 0):
            raise InputError("singular values must be non-increasing")
        if self.left.shape[1] != s.size or self.right.shape[1] != s.size:
            raise InputError("singular vector count does not match rank")

    @property
    def rank(self):
        return self.sigma.size

    @cached_property
    def identity_left(self):
        """True when the left singular vectors are the coordinate basis."""
        U = self.left
        return U.shape[0] == U.shape[1] and np.array_equal(U, np.eye(U.shape[0]))

    def coefficients(self, y, m=None):
        """Coefficients ``(y, u_j)`` for ``j < m`` (all if ``m`` is None)."""
        U = self.left if m is None else self.left[:, :m]
        return U.T @ np.asarray(y, dtype=float)

    def synthesize(self, coeffs):
        """``sum_j coeffs[j] v_j`` over the leading ``len(coeffs)`` right vectors."""
        coeffs = np.asarray(coeffs, dtype=float)
        return self.right[:, : coeffs.size] @ coeffs


def compute_svd(problem, rank_cutoff=RANK_CUTOFF):
    """Singular system of a problem (or bare matrix), dropping negligible modes.

    Singular values below ``rank_cutoff * sigma_1`` are excluded from the rank.
    """
    A = problem.matrix if isinstance(problem, LinearProblem) else np.asarray(problem, dtype=float)
    if not np.all(np.isfinite(A)):
        raise InputError("non-finite entries in matrix")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return SingularSystem(np.zeros(0), U[:, :0], Vt[:0].T)
    r = int(np.sum(s > rank_cutoff * s[0]))
    return SingularSystem(s[:r].copy(), U[:, :r].copy(), Vt[:r].T.copy())


@dataclass(frozen=True)
class NoiseModel:
    """Unit-variance i.i.d. noise scaled by ``delta``.

    Student-t draws are multiplied by ``sqrt((df - 2) / df)`` so that every
    kind has variance one.
    """

    delta: float
    kind: NoiseKind = "gaussian"
    seed: int = 0
    df: float = 5.0

    def __post_init__(self):
        if not self.delta >= 0:
            raise ParameterError("noise level must be non-negative")
        if self.kind not in ("gaussian", "rademacher", "student_t"):
            raise ParameterError(f"unknown noise kind {self.kind!r}")
        if self.kind == "student_t" and not self.df > 2:
            raise ParameterError("Student-t noise needs df > 2 for finite variance")

    def with_seed(self, seed):
        return NoiseModel(self.delta, self.kind, seed, self.df)

    def standard_sample(self, n):
        """Draw ``n`` unit-variance samples; bit-identical for equal seeds."""
        rng = np.random.default_rng(self.seed)
        if self.kind == "gaussian":
            return rng.standard_normal(n)
        if self.kind == "rademacher":
            return rng.integers(0, 2, size=n) * 2.0 - 1.0
        return rng.standard_t(self.df, size=n) * np.sqrt((self.df - 2.0) / self.df)


def sample_noisy_data(problem, noise, unscaled=False):
    """Noisy data ``y + delta * z`` in the problem's rescaled units.

    By default ``noise.delta`` is the noise level of the rescaled problem,
    which is what the stopping rules see. With ``unscaled`` set it is read in
    the units of the original operator and divided by ``operator_scale``.
    """
    if noise.delta == 0:
        return problem.exact_data.copy()
    z = noise.standard_sample(problem.dimension)
    delta = problem.scaled_delta(noise.delta) if unscaled else noise.delta
    return problem.exact_data + delta * z


@dataclass(frozen=True)
class AveragingProjection:
    """Row-block averaging ``R^D -> R^m`` with orthonormal rows.

    Output coordinate ``i`` is the sum of block ``i`` (size ``D/m``) divided
    by ``sqrt(D/m)``.
    """

    dimension: int
    rows: int

    def __post_init__(self):
        if self.rows < 1 or self.dimension < 1:
            raise ConfigurationError("dimensions must be positive")
        if self.dimension % self.rows:
            raise ConfigurationError(f"D={self.dimension} is not divisible by m={self.rows}")

    @property
    def block(self):
        return self.dimension // self.rows

    @property
    def scale(self):
        return 1.0 / np.sqrt(self.block)

    def apply(self, v):
        """Project a length-D vector, or each column of a ``D x n`` array."""
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.dimension:
            raise ConfigurationError(f"expected leading dimension {self.dimension}, got {v.shape[0]}")
        blocks = v.reshape((self.rows, self.block) + v.shape[1:])
        return blocks.sum(axis=1) * self.scale

    def adjoint(self, w):
        w = np.asarray(w, dtype=float)
        return np.repeat(w, self.block, axis=0) * self.scale

    def matrix(self):
        return self.apply(np.eye(self.dimension))


@dataclass(frozen=True, eq=False)
class SVDProjection:
    """Coefficient map ``y -> ((y, u_1), ..., (y, u_m))`` onto leading left singular vectors."""

    system: SingularSystem
    rows: int

    @property
    def dimension(self):
        return self.system.left.shape[0]

    def apply(self, v):
        v = np.asarray(v, dtype=float)
        if self.system.identity_left:
            return v[: self.rows].copy()
        return self.system.left[:, : self.rows].T @ v

    def adjoint(self, w):
        return self.system.left[:, : self.rows] @ np.asarray(w, dtype=float)

    def matrix(self):
        return self.system.left[:, : self.rows].T.copy()


def project_data(projection, vector):
    return projection.apply(vector)


def svd_projection(system, m):
    if m < 0 or m > system.rank:
        raise DimensionRangeError(f"m={m} exceeds rank {system.rank}")
    return SVDProjection(system, m)
