"""Landweber, Tikhonov and spectral cut-off on projected problems."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from adaptdp.errors import DimensionRangeError, ParameterError
from adaptdp.problem import (
    RANK_CUTOFF,
    AveragingProjection,
    SingularSystem,
    SVDProjection,
    compute_svd,
)

CostModel = Literal["paper", "flops"]


def landweber_decay(sigma, k):
    """``(1 - sigma^2)^k`` evaluated as ``exp(k log1p(-sigma^2))``."""
    sigma = np.asarray(sigma, dtype=float)
    k = np.asarray(k, dtype=float)
    if np.all(k == 0):
        return np.ones(np.broadcast(sigma, k).shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.exp(k * np.log1p(-(sigma**2)))
    return np.where(k == 0, 1.0, out)


def landweber_filter(sigma, k):
    """Landweber spectral multiplier ``(1 - (1 - sigma^2)^k) / sigma``.

    The ``sigma -> 0`` limit (``k * sigma``) is returned as zero for exact zeros.
    """
    sigma = np.asarray(sigma, dtype=float)
    k = np.asarray(k, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = -np.expm1(k * np.log1p(-(sigma**2)))
        gain = np.where(k == 0, 0.0, gain)
        return np.where(sigma > 0, gain / sigma, 0.0)


def tikhonov_filter(sigma, alpha):
    sigma = np.asarray(sigma, dtype=float)
    return sigma / (alpha + sigma**2)


def _check_m(system, m):
    if m is None:
        return system.rank
    if m < 0 or m > system.rank:
        raise DimensionRangeError(f"m={m} outside [0, rank={system.rank}]")
    return m


def landweber_closed_form(system: SingularSystem, coeffs, k, m=None):
    """Landweber iterate ``k`` in filter form from data coefficients ``(y, u_j)``."""
    m = _check_m(system, m)
    if k < 0:
        raise ParameterError("iteration index must be non-negative")
    c = np.asarray(coeffs, dtype=float)[:m]
    return system.right[:, :m] @ (landweber_filter(system.sigma[:m], k) * c)


def tikhonov_solve(system: SingularSystem, coeffs, alpha, m=None):
    if not alpha > 0:
        raise ParameterError(f"Tikhonov parameter must be positive, got {alpha}")
    m = _check_m(system, m)
    c = np.asarray(coeffs, dtype=float)[:m]
    return system.right[:, :m] @ (tikhonov_filter(system.sigma[:m], alpha) * c)


def spectral_cutoff(system: SingularSystem, coeffs, k):
    k = _check_m(system, k)
    c = np.asarray(coeffs, dtype=float)[:k]
    return system.right[:, :k] @ (c / system.sigma[:k])


@dataclass(frozen=True)
class FilterSpec:
    family: Literal["landweber", "tikhonov", "cutoff"]
    value: float

    def __post_init__(self):
        if self.family == "tikhonov":
            if not self.value > 0:
                raise ParameterError("alpha must be positive")
        elif self.family in ("landweber", "cutoff"):
            if self.value < 0 or int(self.value) != self.value:
                raise ParameterError(f"{self.family} index must be a non-negative integer")
        else:
            raise ParameterError(f"unknown filter family {self.family!r}")

    def apply(self, system, coeffs, m=None):
        if self.family == "landweber":
            return landweber_closed_form(system, coeffs, int(self.value), m)
        if self.family == "tikhonov":
            return tikhonov_solve(system, coeffs, self.value, m)
        return spectral_cutoff(system, coeffs, int(self.value))


def step_cost(rows, dimension, model: CostModel):
    """Cost units charged for one Landweber step on an ``rows x dimension`` operator."""
    if model == "paper":
        return rows * rows
    return 2 * rows * dimension


class ProjectedOperator:
    """The projected operator ``P_m A`` together with its singular system.

    Residuals and iterates of every filter method are evaluated from the
    coefficients of the projected data in the left singular basis; the part
    of the projected data outside the range of ``P_m A`` enters residuals as
    a constant floor.
    """

    def __init__(self, projection, matrix, system: SingularSystem):
        self.projection = projection
        self.matrix = matrix
        self.system = system

    @classmethod
    def build(cls, problem, projection=None, rank_cutoff=RANK_CUTOFF):
        """Projected operator for ``projection`` (``None`` means the identity)."""
        A = problem.matrix
        if projection is None:
            matrix = A
            system = compute_svd(A, rank_cutoff)
        elif isinstance(projection, SVDProjection) and projection.system.left.shape[0] == A.shape[0]:
            base = projection.system
            m = projection.rows
            matrix = base.left[:, :m].T @ A
            # P_m A = diag(sigma_1..m) V_m^T when the system belongs to A
            system = SingularSystem(base.sigma[:m].copy(), np.eye(m), base.right[:, :m])
        else:
            matrix = projection.apply(A)
            system = compute_svd(matrix, rank_cutoff)
        return cls(projection, matrix, system)

    @property
    def rows(self):
        return self.matrix.shape[0]

    @property
    def dimension(self):
        return self.matrix.shape[1]

    @property
    def sigma(self):
        return self.system.sigma

    def project(self, y):
        """Projected data ``P_m y`` (identity when no projection is attached)."""
        if self.projection is None:
            return np.asarray(y, dtype=float)
        return self.projection.apply(y)

    def coefficients(self, projected):
        """Return ``(c, floor_sq)``: singular coefficients and the out-of-range residual."""
        projected = np.asarray(projected, dtype=float)
        if self.system.identity_left:
            return projected.copy(), 0.0
        c = self.system.left.T @ projected
        floor = projected - self.system.left @ c
        return c, float(floor @ floor)

    def landweber_residual(self, c, floor_sq, k):
        """Residual norm ``||P_m A x_k - P_m y||`` for scalar or array ``k``."""
        k_arr = np.atleast_1d(np.asarray(k, dtype=float))
        decay = landweber_decay(self.sigma[None, :], k_arr[:, None])
        res = np.sqrt(np.sum((decay * c[None, :]) ** 2, axis=1) + floor_sq)
        return res if np.ndim(k) else float(res[0])

    def tikhonov_residual(self, c, floor_sq, alpha):
        a_arr = np.atleast_1d(np.asarray(alpha, dtype=float))
        s2 = self.sigma[None, :] ** 2
        damp = a_arr[:, None] / (a_arr[:, None] + s2)
        res = np.sqrt(np.sum((damp * c[None, :]) ** 2, axis=1) + floor_sq)
        return res if np.ndim(alpha) else float(res[0])

    def landweber_iterate(self, c, k):
        return landweber_closed_form(self.system, c, k)

    def tikhonov_iterate(self, c, alpha):
        return tikhonov_solve(self.system, c, alpha)

    def step_cost(self, model: CostModel):
        return step_cost(self.rows, self.dimension, model)


def averaging_operator(problem, m):
    return ProjectedOperator.build(problem, AveragingProjection(problem.dimension, m))


@dataclass(frozen=True)
class LandweberState:
    """One point of the Landweber recursion on ``P_m A``.

    ``residual_vector`` is ``P_m A x_k - P_m y`` and is kept so that each
    step needs only two matrix-vector products.
    """

    iterate: np.ndarray
    k: int
    residual: float
    residual_vector: np.ndarray
    cost_paper: int = 0
    cost_flops: int = 0

    @classmethod
    def start(cls, operator, projected_data):
        d = np.asarray(projected_data, dtype=float)
        return cls(np.zeros(operator.dimension), 0, float(np.linalg.norm(d)), -d)


def landweber_step(state: LandweberState, operator, projected_data):
    """One step ``x <- x - (P_m A)^T (P_m A x - P_m y)``."""
    B = operator.matrix
    x = state.iterate - B.T @ state.residual_vector
    rv = B @ x - projected_data
    return LandweberState(
        x,
        state.k + 1,
        float(np.linalg.norm(rv)),
        rv,
        state.cost_paper + operator.step_cost("paper"),
        state.cost_flops + operator.step_cost("flops"),
    )


def landweber_recursion(operator, projected_data, k):
    """Run ``k`` recursion steps from ``x_0 = 0`` and return the final state."""
    state = LandweberState.start(operator, projected_data)
    for _ in range(k):
        state = landweber_step(state, operator, projected_data)
    return state
