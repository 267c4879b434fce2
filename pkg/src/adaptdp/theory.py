"""Source conditions, the rate function ``Theta`` and verification oracles."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from adaptdp.errors import ConsistencyError, DimensionRangeError, ParameterError
from adaptdp.problem import NoiseModel
from adaptdp.regularizers import landweber_filter


@dataclass(frozen=True, eq=False)
class IllPosednessProfile:
    """Squared singular values ``sigma_1^2 >= sigma_2^2 >= ...`` (1-based in the API)."""

    sigma_sq: np.ndarray
    kind: Literal["polynomial", "exponential", "svd"] = "svd"

    def __post_init__(self):
        s = np.asarray(self.sigma_sq, dtype=float)
        if s.ndim != 1 or s.size == 0 or np.any(s <= 0):
            raise ParameterError("profile needs positive squared singular values")
        if np.any(np.diff(s) > 0):
            raise ParameterError("profile must be non-increasing")
        object.__setattr__(self, "sigma_sq", s)

    @classmethod
    def polynomial(cls, q, N):
        if not q > 0:
            raise ParameterError("q must be positive")
        return cls(np.arange(1, N + 1, dtype=float) ** -q, "polynomial")

    @classmethod
    def exponential(cls, a, N):
        if not a > 0:
            raise ParameterError("a must be positive")
        return cls(np.exp(-a * np.arange(1, N + 1, dtype=float)), "exponential")

    @classmethod
    def from_sigma(cls, sigma):
        return cls(np.asarray(sigma, dtype=float) ** 2, "svd")

    @property
    def length(self):
        return self.sigma_sq.size

    def __getitem__(self, j):
        """``sigma_j^2`` with 1-based ``j``."""
        return self.sigma_sq[j - 1]


@dataclass(frozen=True, eq=False)
class SourceCondition:
    """Index function ``phi`` with radius ``rho``.

    ``holder``: ``t^(nu/2)``; ``logarithmic``: ``(-log t)^(-p/2)`` for
    ``t < 1``; ``tabulated``: monotone piecewise-linear interpolation of
    ``(grid, values)``.
    """

    kind: Literal["holder", "logarithmic", "tabulated"]
    exponent: float = 1.0
    radius: float = 1.0
    grid: np.ndarray | None = None
    values: np.ndarray | None = None

    def __post_init__(self):
        if not self.radius > 0:
            raise ParameterError("radius must be positive")
        if self.kind in ("holder", "logarithmic"):
            if not self.exponent > 0:
                raise ParameterError("exponent must be positive")
        elif self.kind == "tabulated":
            g = np.asarray(self.grid, dtype=float)
            v = np.asarray(self.values, dtype=float)
            if g.shape != v.shape or g.size < 2:
                raise ParameterError("tabulated grid and values must match")
            if np.any(np.diff(g) <= 0) or np.any(np.diff(v) <= 0) or g[0] < 0:
                raise ParameterError("tabulated phi must be strictly increasing on an increasing grid")
            object.__setattr__(self, "grid", g)
            object.__setattr__(self, "values", v)
        else:
            raise ParameterError(f"unknown source condition {self.kind!r}")

    @classmethod
    def holder(cls, nu, radius=1.0):
        return cls("holder", nu, radius)

    @classmethod
    def logarithmic(cls, p, radius=1.0):
        return cls("logarithmic", p, radius)

    @classmethod
    def tabulated(cls, grid, values, radius=1.0):
        return cls("tabulated", 0.0, radius, np.asarray(grid), np.asarray(values))

    def phi(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "holder":
            return t ** (self.exponent / 2.0)
        if self.kind == "logarithmic":
            with np.errstate(divide="ignore"):
                return np.where(t > 0, (-np.log(t)) ** (-self.exponent / 2.0), 0.0)
        grid = self.grid if self.grid[0] == 0 else np.concatenate([[0.0], self.grid])
        vals = self.values if self.grid[0] == 0 else np.concatenate([[0.0], self.values])
        return np.interp(t, grid, vals)

    def phi_sq_inverse(self, lam):
        """Inverse of ``t -> phi(t)^2``."""
        lam = np.asarray(lam, dtype=float)
        if self.kind == "holder":
            return lam ** (1.0 / self.exponent)
        if self.kind == "logarithmic":
            with np.errstate(divide="ignore"):
                return np.where(lam > 0, np.exp(-(lam ** (-1.0 / self.exponent))), 0.0)
        grid = self.grid if self.grid[0] == 0 else np.concatenate([[0.0], self.grid])
        vals = self.values if self.grid[0] == 0 else np.concatenate([[0.0], self.values])
        # phi is piecewise linear, so invert it at sqrt(lam)
        return np.interp(np.sqrt(lam), vals, grid)


def sigma_interp(profile: IllPosednessProfile, x):
    """Geometric interpolation of ``sigma_j^2`` at real ``x`` in ``[1, N]``."""
    x_arr = np.asarray(x, dtype=float)
    N = profile.length
    if np.any(x_arr < 1) or np.any(x_arr > N):
        raise DimensionRangeError(f"x must lie in [1, {N}]")
    lo = np.floor(x_arr).astype(int)
    frac = x_arr - lo
    hi = np.minimum(lo + 1, N)
    s = profile.sigma_sq
    out = s[lo - 1] ** (1.0 - frac) * s[hi - 1] ** frac
    return out if np.ndim(x) else float(out)


def x_alpha(profile: IllPosednessProfile, alpha):
    """Smallest ``x >= 1`` with ``sigma_x^2 = alpha``."""
    s = profile.sigma_sq
    if not s[-1] <= alpha <= s[0]:
        raise DimensionRangeError(f"alpha={alpha} outside [{s[-1]}, {s[0]}]")
    # first 1-based j with sigma_{j+1}^2 < alpha, or exact node hit
    j = int(np.argmax(s <= alpha)) + 1  # first node at or below alpha
    if s[j - 1] == alpha:
        return float(j)
    # alpha lies strictly between nodes j-1 and j
    lo = j - 1
    a, b = s[lo - 1], s[lo]
    return lo + math.log(alpha / a) / math.log(b / a)


def theta(profile, source: SourceCondition, alpha):
    """``alpha phi(alpha)^2 / x_alpha``."""
    return alpha * float(source.phi(alpha)) ** 2 / x_alpha(profile, alpha)


def theta_inverse(profile, source, t, rtol=1e-12):
    """Solve ``theta(alpha) = t`` by bisection in ``log alpha``."""
    lo, hi = float(profile.sigma_sq[-1]), float(profile.sigma_sq[0])
    t_lo, t_hi = theta(profile, source, lo), theta(profile, source, hi)
    if not t_lo <= t <= t_hi:
        raise DimensionRangeError(f"t={t} outside [{t_lo}, {t_hi}] for this profile")
    if t == t_hi:
        return hi
    llo, lhi = math.log(lo), math.log(hi)
    for _ in range(400):
        mid = 0.5 * (llo + lhi)
        if theta(profile, source, math.exp(mid)) < t:
            llo = mid
        else:
            lhi = mid
        if lhi - llo <= rtol:
            break
    return math.exp(0.5 * (llo + lhi))


def optimal_dimension_m_star(profile, source, delta, rho=None, check=True):
    """``ceil(x_{alpha_*})`` with ``alpha_* = Theta^{-1}(delta^2 / rho^2)``.

    With ``check`` set, the balance ``sigma_m^2 phi^2(sigma_m^2) rho^2 >= m delta^2``
    is verified for every ``m < x_{alpha_*}`` and the reverse inequality for
    every ``m >= m_* + 1``; a violation raises :class:`ConsistencyError`.
    """
    rho = source.radius if rho is None else rho
    alpha = theta_inverse(profile, source, delta**2 / rho**2)
    x = x_alpha(profile, alpha)
    m_star = int(math.ceil(x - 1e-9))
    if check:
        m = np.arange(1, profile.length + 1)
        s = profile.sigma_sq
        lhs = s * source.phi(s) ** 2 * rho**2
        rhs = m * delta**2
        tol = 1e-9 * rhs
        below = m < x - 1e-9
        above = m >= m_star + 1
        if np.any(lhs[below] < rhs[below] - tol[below]) or np.any(lhs[above] > rhs[above] + tol[above]):
            raise ConsistencyError("balance inequalities around m_* violated")
    return m_star


@dataclass
class BalanceBound:
    l_star: int
    bound_sq: float
    bound: float
    theta_rate: float
    exhausted: bool = False


def balance_bound(profile, source, delta, rho=None):
    """Balancing index ``l_*`` and the bracketing variance/bias bound.

    ``bound_sq`` is the smaller of the two bracketing sums (a squared-error
    scale) and ``bound`` its square root; ``theta_rate`` is
    ``rho phi(Theta^{-1}(delta^2 / rho^2))`` for comparison.
    """
    rho = source.radius if rho is None else rho
    s = profile.sigma_sq
    variance = delta**2 * np.cumsum(1.0 / s)  # index l-1 -> sum_{j<=l}
    bias = source.phi(s) ** 2 * rho**2  # index l-1 -> phi^2(sigma_l^2)
    # l ranges over 1..N-1 so that sigma_{l+1} exists
    ok = np.nonzero(variance[:-1] >= bias[1:])[0]
    exhausted = ok.size == 0
    l_star = int(ok[0]) + 1 if not exhausted else profile.length - 1
    first = variance[l_star - 1] + bias[l_star]
    prev_var = variance[l_star - 2] if l_star >= 2 else 0.0
    second = prev_var + bias[l_star - 1]
    bound_sq = float(min(first, second))
    try:
        rate = rho * float(source.phi(theta_inverse(profile, source, delta**2 / rho**2)))
    except DimensionRangeError:
        rate = float("nan")
    return BalanceBound(l_star, bound_sq, math.sqrt(bound_sq), rate, exhausted)


def log_grid(lo=1e-12, hi=1.0, per_decade=10_000, max_points=1_000_000):
    decades = math.log10(hi / lo)
    n = min(int(round(decades * per_decade)) + 1, max_points)
    return np.logspace(math.log10(lo), math.log10(hi), n)


@dataclass
class QualificationReport:
    k: np.ndarray
    margin_phi: np.ndarray
    margin_sqrt: np.ndarray

    @property
    def passed(self):
        return bool(np.all(self.margin_phi >= 0) and np.all(self.margin_sqrt >= 0))


def _grid_sup(f, grid, coarse_step=100):
    """Supremum of ``f`` over ``grid`` for unimodal ``f``: coarse scan, then dense window."""
    coarse_idx = np.arange(0, grid.size, coarse_step)
    if coarse_idx[-1] != grid.size - 1:
        coarse_idx = np.append(coarse_idx, grid.size - 1)
    vals = f(grid[coarse_idx])
    i = int(np.nanargmax(vals))
    lo = coarse_idx[max(i - 2, 0)]
    hi = coarse_idx[min(i + 2, coarse_idx.size - 1)]
    dense = f(grid[lo : hi + 1])
    return max(float(np.nanmax(dense)), float(np.nanmax(vals)))


def qualification_check(source: SourceCondition, k_grid, lam_grid=None, tol=1e-12):
    """Margins ``phi(1/k) - sup_lam (1 - lam)^k phi(lam)`` on a dense log grid.

    The same margin is reported for ``lam -> sqrt(lam) phi(lam)``. A margin
    is considered non-negative up to ``tol`` times the right-hand side.
    """
    lam = log_grid() if lam_grid is None else np.asarray(lam_grid, dtype=float)
    ks = np.asarray(list(k_grid), dtype=float)
    m_phi = np.empty(ks.size)
    m_sqrt = np.empty(ks.size)
    for i, k in enumerate(ks):

        def f(x, k=k):
            with np.errstate(divide="ignore", invalid="ignore"):
                v = np.exp(k * np.log1p(-x)) * source.phi(x)
            return np.where(x >= 1.0, 0.0, v)

        def g(x, k=k):
            return np.sqrt(x) * f(x)

        with np.errstate(divide="ignore"):
            rhs_phi = float(source.phi(1.0 / k))
        rhs_sqrt = math.sqrt(1.0 / k) * rhs_phi
        m_phi[i] = rhs_phi - _grid_sup(f, lam)
        m_sqrt[i] = rhs_sqrt - _grid_sup(g, lam)
        # absorb rounding at exact equality
        if abs(m_phi[i]) <= tol * max(rhs_phi, 1e-300):
            m_phi[i] = max(m_phi[i], 0.0)
        if abs(m_sqrt[i]) <= tol * max(rhs_sqrt, 1e-300):
            m_sqrt[i] = max(m_sqrt[i], 0.0)
    return QualificationReport(ks, m_phi, m_sqrt)


def tikhonov_qualification_check(source: SourceCondition, alpha_grid, lam_grid=None):
    """Margins ``phi(alpha) - sup_lam alpha / (alpha + lam) phi(lam)``."""
    lam = log_grid(per_decade=1000) if lam_grid is None else np.asarray(lam_grid, dtype=float)
    alphas = np.asarray(list(alpha_grid), dtype=float)
    margins = np.empty(alphas.size)
    for i, a in enumerate(alphas):
        sup = float(np.max(a / (a + lam) * source.phi(lam)))
        margins[i] = float(source.phi(a)) - sup
    return margins


def source_convexity(source: SourceCondition, upper=None, n=20_001):
    """Minimum second divided difference of ``lam -> lam * (phi^2)^{-1}(lam)``.

    Evaluated on a uniform grid over ``(0, upper]`` (default ``phi(1)^2`` for
    Hölder and ``phi(e^-1)^2`` for logarithmic conditions).
    """
    if upper is None:
        upper = float(source.phi(1.0 if source.kind == "holder" else math.exp(-1.0))) ** 2
    lam = np.linspace(0.0, upper, n)[1:]
    f = lam * source.phi_sq_inverse(lam)
    h = lam[1] - lam[0]
    return float(np.min((f[2:] - 2 * f[1:-1] + f[:-2]) / h**2))


def last_violation(z_sq, eps):
    """Largest ``m`` with ``|sum_{j<=m} z_j^2 - m| >= eps m`` (0 if none)."""
    m = np.arange(1, z_sq.size + 1)
    dev = np.abs(np.cumsum(z_sq) - m) >= eps * m
    idx = np.nonzero(dev)[0]
    return int(idx[-1]) + 1 if idx.size else 0


def concentration_profile(kappas, eps=0.5, horizon=100_000, n_runs=200, kind="gaussian", seed=0):
    """Empirical ``P(exists m in [kappa, horizon]: |S_m - m| >= eps m)`` for each ``kappa``.

    ``S_m`` is the running sum of squared unit-variance noise coordinates.
    All ``kappa`` values share the same draws, so estimates are
    non-increasing in ``kappa`` by construction.
    """
    last = np.empty(n_runs, dtype=int)
    for run in range(n_runs):
        z = NoiseModel(1.0, kind, seed + run).standard_sample(horizon)
        last[run] = last_violation(z * z, eps)
    return {int(k): float(np.mean(last >= k)) for k in kappas}


def concentration_test(kind="gaussian", kappa=1000, n_runs=200, eps=0.5, horizon=100_000, seed=0):
    return concentration_profile([kappa], eps, horizon, n_runs, kind, seed)[int(kappa)]


@dataclass
class OracleResult:
    k: int
    m: int
    error: float
    level_errors: dict[int, float]


def oracle_k_values(k_max, k_exhaustive=2000, rel_step=1e-3):
    """Every ``k <= k_exhaustive``, then a geometric grid of relative spacing ``rel_step``."""
    if k_max <= k_exhaustive:
        return np.arange(k_max + 1)
    n = int(math.ceil(math.log(k_max / k_exhaustive) / math.log1p(rel_step))) + 1
    tail = np.unique(np.round(np.geomspace(k_exhaustive, k_max, n)).astype(np.int64))
    return np.unique(np.concatenate([np.arange(k_exhaustive + 1), tail]))


def empirical_oracle(levels, ydelta, x_true, k_max=2000, k_values=None, chunk=256):
    """Realised-error oracle ``min_{k, m} ||x_{k,m} - x_true||`` over a ladder.

    Uses the closed-form Landweber filter on each level. ``k_values``
    overrides the default exhaustive range ``0..k_max``.
    """
    ks = np.arange(k_max + 1) if k_values is None else np.asarray(k_values)
    best = (math.inf, 0, 0)
    per_level = {}
    for op in levels:
        c, _ = op.coefficients(op.project(ydelta))
        V = op.system.right
        b = V.T @ x_true
        outside = float(np.sum((x_true - V @ b) ** 2))
        level_best = (math.inf, 0)
        for start in range(0, ks.size, chunk):
            kk = ks[start : start + chunk].astype(float)
            f = landweber_filter(op.sigma[None, :], kk[:, None]) * c[None, :]
            err_sq = np.sum((f - b[None, :]) ** 2, axis=1) + outside
            i = int(np.argmin(err_sq))
            if err_sq[i] < level_best[0]:
                level_best = (float(err_sq[i]), int(ks[start + i]))
        per_level[op.rows] = math.sqrt(level_best[0])
        if level_best[0] < best[0]:
            best = (level_best[0], level_best[1], op.rows)
    return OracleResult(best[1], best[2], math.sqrt(best[0]), per_level)
