"""Fredholm test problems, synthetic diagonal problems and discretisation ladders.

The integral-equation problems follow the Regularization Tools conventions:

* ``phillips`` and ``deriv2``: Galerkin discretisation with orthonormal box
  functions on a uniform grid, ``A_ij = (1/h) int_{I_i} int_{I_j} k(s, t)``
  and ``x_j = (1/sqrt(h)) int_{I_j} f``.
* ``gravity`` and ``heat``: midpoint quadrature, ``A_ij = h k(s_i, t_j)``
  with the solution sampled at the midpoints.

In all cases the exact data is ``A x``, and the operator is rescaled to unit
norm by power iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.linalg import toeplitz

from adaptdp.errors import ConfigurationError, DimensionRangeError, InputError, ParameterError
from adaptdp.problem import AveragingProjection, LinearProblem, SingularSystem, svd_projection
from adaptdp.regularizers import ProjectedOperator

PROBLEMS = ("phillips", "deriv2", "gravity", "heat")

_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(12)


def _check_dimension(D, multiple=1):
    if D < 4:
        raise ConfigurationError("dimension must be at least 4")
    if D % multiple:
        raise ConfigurationError(f"dimension must be a multiple of {multiple}")


def _phillips_theta(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) < 3.0, 1.0 + np.cos(np.pi * u / 3.0), 0.0)


def gen_phillips(D=4096):
    """Phillips' equation on ``[-6, 6]`` with kernel and solution ``theta``.

    The Galerkin entries depend only on ``i - j`` (the kernel is a
    convolution) and are integrated with Gauss-Legendre rules on each half
    of the triangular weight ``h - |u|``; the kinks of ``theta`` at ``+-3``
    fall on cell boundaries whenever ``D`` is a multiple of 4.
    """
    _check_dimension(D, 4)
    h = 12.0 / D
    offsets = np.arange(D) * h
    # (1/h) int_{-h}^{h} (h - |u|) theta(offset + u) du, split at u = 0
    u = 0.5 * h * (_GAUSS_X + 1.0)
    w = 0.5 * h * _GAUSS_W
    weight = h - u
    right = (_phillips_theta(offsets[:, None] + u[None, :]) * weight) @ w
    left = (_phillips_theta(offsets[:, None] - u[None, :]) * weight) @ w
    row = (left + right) / h
    A = toeplitz(row)
    t = -6.0 + h * np.arange(D + 1)
    antider = np.where(
        np.abs(t) < 3.0,
        t + 3.0 / np.pi * np.sin(np.pi * t / 3.0),
        np.sign(t) * 3.0,
    )
    x = np.diff(antider) / math.sqrt(h)
    return LinearProblem.from_matrix(A, x, name="phillips")


def gen_deriv2(D=4096):
    """Green's function of ``-d^2/dt^2`` on ``[0, 1]`` with solution ``f(t) = t``.

    Entries are the exact box-function Galerkin integrals of the piecewise
    bilinear kernel; all entries are non-positive.
    """
    _check_dimension(D)
    h = 1.0 / D
    idx = np.arange(1, D + 1, dtype=float)
    mid = (idx - 0.5) * h
    # s > t: k = t (s - 1) integrates exactly at midpoints for disjoint cells
    A = h * np.outer(mid - 1.0, mid)
    A = np.tril(A, -1)
    A = A + A.T
    A[np.diag_indices(D)] = h**2 * ((idx**2 - idx + 0.25) * h - (idx - 2.0 / 3.0))
    x = math.sqrt(h) * mid
    return LinearProblem.from_matrix(A, x, name="deriv2")


def gen_gravity(D=4096, depth=0.25):
    """Gravity surveying kernel ``d (d^2 + (s - t)^2)^(-3/2)`` on ``[0, 1]``.

    Solution ``sin(pi t) + sin(2 pi t) / 2`` at the midpoints.
    """
    if not depth > 0:
        raise ParameterError("depth must be positive")
    _check_dimension(D)
    h = 1.0 / D
    mid = (np.arange(D) + 0.5) * h
    row = h * depth * (depth**2 + (mid - mid[0]) ** 2) ** -1.5
    A = toeplitz(row)
    x = np.sin(np.pi * mid) + 0.5 * np.sin(2.0 * np.pi * mid)
    return LinearProblem.from_matrix(A, x, name="gravity")


def heat_kernel(t, kappa=1.0):
    """``t^(-3/2) / (2 kappa sqrt(pi)) exp(-1 / (4 kappa^2 t))`` with the ``t -> 0+`` limit 0."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    tp = t[pos]
    out[pos] = tp**-1.5 / (2.0 * kappa * math.sqrt(math.pi)) * np.exp(-1.0 / (4.0 * kappa**2 * tp))
    return out


def gen_heat(D=4096, kappa=1.0):
    """Inverse heat equation (Volterra, lower triangular Toeplitz) on ``[0, 1]``.

    Solution: the toolbox's piecewise profile on the first half of the
    interval, zero on the second half.
    """
    if not kappa > 0:
        raise ParameterError("kappa must be positive")
    _check_dimension(D, 2)
    h = 1.0 / D
    mid = (np.arange(D) + 0.5) * h
    col = h * heat_kernel(mid, kappa)
    first_row = np.zeros(D)
    first_row[0] = col[0]
    A = toeplitz(col, first_row)
    x = np.zeros(D)
    ti = np.arange(1, D // 2 + 1) * 20.0 / D
    x[: D // 2] = np.where(
        ti < 2.0,
        0.75 * ti**2 / 4.0,
        np.where(ti < 3.0, 0.75 + (ti - 2.0) * (3.0 - ti), 0.75 * np.exp(-(ti - 3.0) * 2.0)),
    )
    return LinearProblem.from_matrix(A, x, name="heat")


def gen_diagonal(sigma, solution_coeffs, name="diagonal"):
    """Diagonal problem ``A = diag(sigma)`` with its trivial singular system.

    No rescaling is applied; ``sigma`` must be positive, non-increasing and
    at most one.
    """
    s = np.asarray(sigma, dtype=float)
    x = np.asarray(solution_coeffs, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise InputError("sigma must be a non-empty vector")
    if np.any(s <= 0) or np.any(np.diff(s) > 0):
        raise InputError("sigma must be positive and non-increasing")
    if s[0] > 1 + 1e-12:
        raise InputError("diagonal problems require sigma_1 <= 1")
    if x.shape != s.shape:
        raise InputError("solution length must match sigma")
    A = np.diag(s)
    problem = LinearProblem(A, x, s * x, operator_scale=1.0, name=name)
    eye = np.eye(s.size)
    return problem, SingularSystem(s.copy(), eye, eye.copy())


def counterexample_sigma(N=2048, sigma1=0.9):
    """``sigma_1 = sigma_2 = sigma1`` and ``sigma_j = sigma1 / (j - 1)`` for ``j >= 3``."""
    j = np.arange(1, N + 1, dtype=float)
    s = sigma1 / np.maximum(j - 1.0, 1.0)
    return s


def counterexample_problem(sigma1=0.9, N=2048, k=50, tau=2.0, second=0.5):
    """Configuration of the naive max-rule failure: ``x = v_1 + second * v_2``.

    Returns ``(problem, system, delta)`` with
    ``delta = sigma1 (1 - sigma1^2)^k / tau``, the left end of the
    admissible noise bracket for iteration count ``k``. Any reconstruction
    in ``span(v_1)`` is at distance at least ``|second|`` from ``x``.
    """
    if not 0 < sigma1 < 1:
        raise ParameterError("sigma1 must lie in (0, 1)")
    if N < 3:
        raise ConfigurationError("need at least three modes")
    delta = sigma1 * (1.0 - sigma1**2) ** k / tau
    if not delta > 0 or not np.isfinite(delta) or delta < 1e-280:
        raise ParameterError(f"k={k} underflows the noise level")
    x = np.zeros(N)
    x[0], x[1] = 1.0, second
    problem, system = gen_diagonal(counterexample_sigma(N, sigma1), x, name="counterexample")
    return problem, system, delta


def counterexample_admissible(delta, sigma1, k, tau):
    """Check ``tau^2 delta^2 <= (1 - sigma1^2)^(2k) sigma1^2 <= 4/3 tau^2 delta^2``."""
    middle = (1.0 - sigma1**2) ** (2 * k) * sigma1**2
    lo = tau**2 * delta**2
    return lo * (1 - 1e-12) <= middle <= 4.0 / 3.0 * lo * (1 + 1e-12)


@dataclass(frozen=True)
class TestProblemSpec:
    name: str
    dimension: int = 4096
    depth: float = 0.25
    kappa: float = 1.0

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if self.name not in PROBLEMS:
            raise ConfigurationError(f"unknown problem {self.name!r}; choose from {PROBLEMS}")
        if self.dimension < 4:
            raise ConfigurationError("dimension must be at least 4")
        if not (self.depth > 0 and self.kappa > 0):
            raise ParameterError("kernel parameters must be positive")

    def generate(self):
        return make_problem(self.name, self.dimension, depth=self.depth, kappa=self.kappa)


def make_problem(name, D, depth=0.25, kappa=1.0):
    if name == "phillips":
        return gen_phillips(D)
    if name == "deriv2":
        return gen_deriv2(D)
    if name == "gravity":
        return gen_gravity(D, depth)
    if name == "heat":
        return gen_heat(D, kappa)
    raise ConfigurationError(f"unknown problem {name!r}")


@dataclass(frozen=True)
class DiscretisationLadder:
    """Increasing data dimensions ``m_1 < ... < m_L`` and how to project onto them."""

    dimensions: tuple[int, ...]
    kind: Literal["averaging", "svd"] = "averaging"

    def __post_init__(self):
        dims = tuple(int(m) for m in self.dimensions)
        if not dims:
            raise ConfigurationError("ladder must contain at least one dimension")
        if any(b <= a for a, b in zip(dims, dims[1:])) or dims[0] < 1:
            raise ConfigurationError("ladder dimensions must be positive and strictly increasing")
        if self.kind not in ("averaging", "svd"):
            raise ConfigurationError(f"unknown projection kind {self.kind!r}")
        object.__setattr__(self, "dimensions", dims)

    def __len__(self):
        return len(self.dimensions)

    def projections(self, problem, system=None):
        D = problem.dimension
        if self.dimensions[-1] > D:
            raise ConfigurationError("ladder exceeds the problem dimension")
        if self.kind == "averaging":
            return [AveragingProjection(D, m) for m in self.dimensions]
        if system is None:
            raise ConfigurationError("SVD ladders need the singular system of the problem")
        if self.dimensions[-1] > system.rank:
            raise DimensionRangeError("ladder exceeds the rank of the operator")
        return [svd_projection(system, m) for m in self.dimensions]

    def operators(self, problem, system=None):
        """Projected operators ``P_m A`` for every rung (noise independent, reusable)."""
        return [ProjectedOperator.build(problem, p) for p in self.projections(problem, system)]


def build_ladder(D, kind="averaging", include_one=False):
    """Dyadic ladder ``2, 4, ..., D`` (optionally starting at 1)."""
    if D < 1 or D & (D - 1):
        if kind == "averaging":
            raise ConfigurationError(f"averaging ladders need a power-of-two dimension, got {D}")
        dims = [2**l for l in range(1, int(math.log2(D)) + 1)]
        if dims[-1] != D:
            dims.append(D)
    else:
        dims = [2**l for l in range(1, int(math.log2(D)) + 1)]
    if include_one:
        dims = [1] + dims
    return DiscretisationLadder(tuple(dims), kind)
