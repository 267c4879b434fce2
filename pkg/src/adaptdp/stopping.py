"""Parameter choice rules built on the discrepancy principle.

All noise levels passed to these functions are in the rescaled units of the
operators they act on (see :meth:`LinearProblem.scaled_delta`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Literal, Sequence

import numpy as np

from adaptdp.errors import ConfigurationError, ParameterError
from adaptdp.regularizers import LandweberState, ProjectedOperator, landweber_step

Engine = Literal["spectral", "recursion"]

# denominators below this make a ratio test pass outright
ZERO_RESIDUAL = 1e-300


class Flag(str, Enum):
    CONVERGED = "Converged"
    CAP_REACHED = "CapReached"
    LADDER_EXHAUSTED = "LadderExhausted"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class StoppingConfig:
    """Parameters of the stopping rules.

    ``eta`` defaults to ``1/(2 tau e^4)``, ``shrink`` (the Tikhonov factor
    ``t``) to ``1/(8 tau)`` and ``tikhonov_threshold`` to ``2 t``.
    """

    tau: float = 1.5
    eta: float | None = None
    q: float = 0.5
    shrink: float | None = None
    tikhonov_threshold: float | None = None
    max_iterations: int = 500_000_000
    grid_depth: int = 200
    engine: Engine = "spectral"

    def __post_init__(self):
        if not self.tau > 1:
            raise ParameterError("tau must exceed 1")
        if self.eta is None:
            object.__setattr__(self, "eta", 1.0 / (2.0 * self.tau * math.e**4))
        if self.shrink is None:
            object.__setattr__(self, "shrink", 1.0 / (8.0 * self.tau))
        if self.tikhonov_threshold is None:
            object.__setattr__(self, "tikhonov_threshold", 2.0 * self.shrink)
        if not 0 < self.eta < 1:
            raise ParameterError("eta must lie in (0, 1)")
        if not 0 < self.q < 1:
            raise ParameterError("q must lie in (0, 1)")
        if not 0 < self.shrink < 1:
            raise ParameterError("shrink factor must lie in (0, 1)")
        if self.max_iterations < 1:
            raise ParameterError("iteration cap must be at least 1")
        if self.grid_depth < 0:
            raise ParameterError("grid depth must be non-negative")
        if self.engine not in ("spectral", "recursion"):
            raise ConfigurationError(f"unknown engine {self.engine!r}")


@dataclass
class DiscrepancyResult:
    """Outcome of one discrepancy search on a fixed projected operator.

    ``trace`` maps iteration index (or grid exponent for Tikhonov) to the
    residual norm at that point.
    """

    k: int
    flag: Flag
    threshold: float
    trace: dict[int, float]
    coeffs: np.ndarray
    floor_sq: float
    alpha: float | None = None
    iterates: dict[int, np.ndarray] = field(default_factory=dict)

    def __iter__(self):
        # allows ``k, trace = discrepancy_index(...)``
        yield self.alpha if self.alpha is not None else self.k
        yield self.trace

    @property
    def residual(self):
        return self.trace[self.k]


@dataclass
class LevelRecord:
    m: int
    k: int
    flag: Flag
    threshold: float
    residual: float
    residual_prev: float | None = None
    residual_double: float | None = None
    alpha: float | None = None
    ratio: float | None = None


@dataclass
class StoppingReport:
    rule: str
    m: int
    k: int | None
    alpha: float | None
    flag: Flag
    rounds: int
    levels: list[LevelRecord]
    cost_paper: float
    cost_flops: float
    solution: np.ndarray | None = None
    capped_levels: int = 0

    @property
    def ladder_k(self):
        return {rec.m: rec.k for rec in self.levels}

    def fields(self):
        """Ordered ``(key, value)`` pairs; the solution vector is omitted."""
        out = [
            ("rule", self.rule),
            ("m", self.m),
            ("k", "" if self.k is None else self.k),
            ("alpha", "" if self.alpha is None else repr(float(self.alpha))),
            ("flag", str(self.flag)),
            ("rounds", self.rounds),
            ("cost_paper", repr(float(self.cost_paper))),
            ("cost_flops", repr(float(self.cost_flops))),
            ("capped_levels", self.capped_levels),
        ]
        table = ";".join(
            f"{r.m}:{r.alpha if r.alpha is not None else r.k}:{'' if r.ratio is None else repr(r.ratio)}"
            for r in self.levels
        )
        out.append(("levels", table))
        return out

    def to_record(self):
        """One ``key=value`` per line in a fixed order."""
        return "\n".join(f"{k}={v}" for k, v in self.fields()) + "\n"

    def csv_header(self):
        return [k for k, _ in self.fields()]

    def csv_row(self):
        return [str(v) for _, v in self.fields()]


def _first_crossing(res, threshold, cap):
    """Smallest ``k`` in ``[0, cap]`` with ``res(k) <= threshold`` for non-increasing ``res``.

    Returns ``(k, capped)``; ``k = cap`` with ``capped`` set if never reached.
    """
    if res(0) <= threshold:
        return 0, False
    lo, hi = 0, 1
    while hi < cap and res(hi) > threshold:
        lo, hi = hi, min(2 * hi, cap)
    if res(hi) > threshold:
        return cap, True
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if res(mid) <= threshold:
            hi = mid
        else:
            lo = mid
    return hi, False


def discrepancy_index(
    operator: ProjectedOperator,
    ydelta,
    delta,
    tau=1.5,
    cap=500_000_000,
    engine: Engine = "spectral",
    threshold=None,
):
    """Smallest ``k >= 0`` with ``||P_m A x_k - P_m y|| <= tau sqrt(m) delta``.

    The spectral engine evaluates residuals in closed form and brackets the
    crossing by doubling plus bisection; the recursion engine runs the
    Landweber steps and checks after each one. Both also record the
    residual at ``2 k`` for the ratio test of the modified rule.
    """
    if not delta >= 0:
        raise ParameterError("noise level must be non-negative")
    m = operator.rows
    if threshold is None:
        threshold = tau * math.sqrt(m) * delta
    projected = operator.project(ydelta)
    c, floor_sq = operator.coefficients(projected)

    if engine == "recursion":
        return _discrepancy_recursion(operator, projected, c, floor_sq, threshold, cap)

    res = lambda k: operator.landweber_residual(c, floor_sq, k)  # noqa: E731
    k, capped = _first_crossing(res, threshold, cap)
    trace = {k: res(k), 2 * k: res(2 * k)}
    if k > 0:
        trace[k - 1] = res(k - 1)
    flag = Flag.CAP_REACHED if capped else Flag.CONVERGED
    return DiscrepancyResult(k, flag, threshold, dict(sorted(trace.items())), c, floor_sq)


def _discrepancy_recursion(operator, projected, c, floor_sq, threshold, cap):
    state = LandweberState.start(operator, projected)
    trace = {0: state.residual}
    iterates = {0: state.iterate}
    k_dp = None
    while True:
        if k_dp is None and state.residual <= threshold:
            k_dp = state.k
            iterates[k_dp] = state.iterate
        if k_dp is not None and state.k >= 2 * k_dp:
            iterates[2 * k_dp] = state.iterate
            break
        if k_dp is None and state.k >= cap:
            k_dp = cap
            # closed form for the doubled index beyond the cap
            trace[2 * cap] = operator.landweber_residual(c, floor_sq, 2 * cap)
            iterates[cap] = state.iterate
            return DiscrepancyResult(cap, Flag.CAP_REACHED, threshold, trace, c, floor_sq, iterates=iterates)
        state = landweber_step(state, operator, projected)
        trace[state.k] = state.residual
    return DiscrepancyResult(k_dp, Flag.CONVERGED, threshold, trace, c, floor_sq, iterates=iterates)


def ladder_discrepancy(levels: Sequence[ProjectedOperator], ydelta, delta, config: StoppingConfig):
    """Per-level discrepancy results for a whole ladder."""
    if not levels:
        raise ConfigurationError("ladder is empty")
    return [
        discrepancy_index(op, ydelta, delta, config.tau, config.max_iterations, config.engine)
        for op in levels
    ]


def _landweber_costs(levels, results):
    paper = sum(r.k * op.step_cost("paper") for op, r in zip(levels, results))
    flops = sum(r.k * op.step_cost("flops") for op, r in zip(levels, results))
    return float(paper), float(flops)


def _level_records(levels, results):
    recs = []
    for op, r in zip(levels, results):
        recs.append(
            LevelRecord(
                m=op.rows,
                k=r.k,
                flag=r.flag,
                threshold=r.threshold,
                residual=r.trace[r.k],
                residual_prev=r.trace.get(r.k - 1) if r.k > 0 else None,
                residual_double=r.trace.get(2 * r.k),
            )
        )
    return recs


def _landweber_solution(op, result, k):
    if k in result.iterates:
        return result.iterates[k]
    return op.landweber_iterate(result.coeffs, k)


def naive_max_rule(levels, ydelta, delta, config: StoppingConfig, results=None):
    """Maximal ``k_dp(m)`` over the ladder; ties go to the smallest dimension."""
    results = results or ladder_discrepancy(levels, ydelta, delta, config)
    ks = [r.k for r in results]
    idx = int(np.argmax(ks))  # first maximiser = smallest m
    records = _level_records(levels, results)
    paper, flops = _landweber_costs(levels, results)
    capped = sum(r.flag is Flag.CAP_REACHED for r in results)
    return StoppingReport(
        rule="naive_max",
        m=levels[idx].rows,
        k=ks[idx],
        alpha=None,
        flag=results[idx].flag,
        rounds=1,
        levels=records,
        cost_paper=paper,
        cost_flops=flops,
        solution=_landweber_solution(levels[idx], results[idx], ks[idx]),
        capped_levels=capped,
    )


def _ratio(numerator, denominator):
    if denominator < ZERO_RESIDUAL:
        return 1.0
    return numerator / denominator


def algorithm1_modified_dp(levels, ydelta, delta, config: StoppingConfig, results=None):
    """Modified discrepancy principle for Landweber iteration.

    Candidates are taken in order: the smallest remaining dimension whose
    ``k_dp`` attains the maximum over all remaining dimensions, where the
    remaining dimensions lie strictly beyond the last rejected candidate. A
    candidate is accepted once ``res(2 k_dp) / res(k_dp) >= eta``.
    """
    results = results or ladder_discrepancy(levels, ydelta, delta, config)
    records = _level_records(levels, results)
    ks = np.array([r.k for r in results])
    start = 0
    rounds = 0
    chosen = None
    accepted = False
    while start < len(levels):
        rounds += 1
        idx = start + int(np.argmax(ks[start:]))
        r = results[idx]
        ratio = _ratio(r.trace[2 * r.k], r.trace[r.k])
        records[idx].ratio = ratio
        chosen = idx
        if ratio >= config.eta:
            accepted = True
            break
        start = idx + 1

    paper, flops = _landweber_costs(levels, results)
    capped = sum(res.flag is Flag.CAP_REACHED for res in results)
    r = results[chosen]
    if r.flag is Flag.CAP_REACHED:
        flag = Flag.CAP_REACHED
    elif not accepted:
        flag = Flag.LADDER_EXHAUSTED
    else:
        flag = Flag.CONVERGED
    return StoppingReport(
        rule="algorithm1",
        m=levels[chosen].rows,
        k=r.k,
        alpha=None,
        flag=flag,
        rounds=rounds,
        levels=records,
        cost_paper=paper,
        cost_flops=flops,
        solution=_landweber_solution(levels[chosen], r, r.k),
        capped_levels=capped,
    )


def tikhonov_discrepancy_alpha(operator: ProjectedOperator, ydelta, delta, tau=1.5, q=0.5, depth=200, shrink=None):
    """Largest grid value ``alpha = q^j`` whose Tikhonov residual meets ``tau sqrt(m) delta``.

    The trace is keyed by grid exponent ``j`` and holds residuals at
    ``q^(j-1)`` and ``q^j``; the residual at ``shrink * q^j`` is stored
    under key ``-1`` when ``shrink`` is given.
    """
    if not delta >= 0:
        raise ParameterError("noise level must be non-negative")
    if not 0 < q < 1:
        raise ParameterError("q must lie in (0, 1)")
    m = operator.rows
    threshold = tau * math.sqrt(m) * delta
    projected = operator.project(ydelta)
    c, floor_sq = operator.coefficients(projected)
    exps = np.arange(depth + 1)
    res = operator.tikhonov_residual(c, floor_sq, q**exps)
    hits = np.nonzero(res <= threshold)[0]
    if hits.size:
        j, flag = int(hits[0]), Flag.CONVERGED
    else:
        j, flag = depth, Flag.CAP_REACHED
    alpha = q**j
    trace = {j: float(res[j])}
    if j > 0:
        trace[j - 1] = float(res[j - 1])
    if shrink is not None:
        trace[-1] = operator.tikhonov_residual(c, floor_sq, shrink * alpha)
    return DiscrepancyResult(j, flag, threshold, dict(sorted(trace.items())), c, floor_sq, alpha=alpha)


def algorithm2_modified_dp_tikhonov(levels, ydelta, delta, config: StoppingConfig):
    """Modified discrepancy principle for Tikhonov regularisation.

    Mirrors :func:`algorithm1_modified_dp` with candidates minimising
    ``alpha_dp`` and the ratio ``res(t alpha) / res(alpha)`` tested against
    ``config.tikhonov_threshold``.
    """
    if not levels:
        raise ConfigurationError("ladder is empty")
    t = config.shrink
    results = [
        tikhonov_discrepancy_alpha(op, ydelta, delta, config.tau, config.q, config.grid_depth, shrink=t)
        for op in levels
    ]
    records = [
        LevelRecord(
            m=op.rows,
            k=r.k,
            flag=r.flag,
            threshold=r.threshold,
            residual=r.trace[r.k],
            residual_prev=r.trace.get(r.k - 1) if r.k > 0 else None,
            residual_double=r.trace[-1],
            alpha=r.alpha,
        )
        for op, r in zip(levels, results)
    ]
    alphas = np.array([r.alpha for r in results])
    start, rounds, chosen, accepted = 0, 0, None, False
    while start < len(levels):
        rounds += 1
        idx = start + int(np.argmin(alphas[start:]))
        r = results[idx]
        ratio = _ratio(r.trace[-1], r.trace[r.k])
        records[idx].ratio = ratio
        chosen = idx
        if ratio >= config.tikhonov_threshold:
            accepted = True
            break
        start = idx + 1
    r = results[chosen]
    if r.flag is Flag.CAP_REACHED:
        flag = Flag.CAP_REACHED
    elif not accepted:
        flag = Flag.LADDER_EXHAUSTED
    else:
        flag = Flag.CONVERGED
    # one Tikhonov solve per grid point visited
    paper = float(sum((r.k + 1) * op.step_cost("paper") for op, r in zip(levels, results)))
    flops = float(sum((r.k + 1) * op.step_cost("flops") for op, r in zip(levels, results)))
    return StoppingReport(
        rule="algorithm2",
        m=levels[chosen].rows,
        k=None,
        alpha=r.alpha,
        flag=flag,
        rounds=rounds,
        levels=records,
        cost_paper=paper,
        cost_flops=flops,
        solution=levels[chosen].tikhonov_iterate(r.coeffs, r.alpha),
        capped_levels=sum(res.flag is Flag.CAP_REACHED for res in results),
    )


def early_stopping_dp(operator: ProjectedOperator, ydelta, delta, cap=500_000_000, engine: Engine = "spectral"):
    """Full-dimension sequential discrepancy stop at ``||A x_k - y|| <= sqrt(D) delta``.

    ``operator`` should be the unprojected operator (``ProjectedOperator.build(problem)``).
    """
    result = discrepancy_index(operator, ydelta, delta, tau=1.0, cap=cap, engine=engine)
    k = result.k
    solution = _landweber_solution(operator, result, k)
    rec = LevelRecord(
        m=operator.rows,
        k=k,
        flag=result.flag,
        threshold=result.threshold,
        residual=result.trace[k],
        residual_prev=result.trace.get(k - 1) if k > 0 else None,
    )
    return StoppingReport(
        rule="early_stopping",
        m=operator.rows,
        k=k,
        alpha=None,
        flag=result.flag,
        rounds=1,
        levels=[rec],
        cost_paper=float(k * operator.step_cost("paper")),
        cost_flops=float(k * operator.step_cost("flops")),
        solution=solution,
        capped_levels=int(result.flag is Flag.CAP_REACHED),
    )
