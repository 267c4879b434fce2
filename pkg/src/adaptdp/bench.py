"""Monte Carlo experiment harness: paired rule comparisons, tables and studies."""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from adaptdp.errors import AdaptDPError, ConfigurationError, ParameterError
from adaptdp.problem import NoiseModel, sample_noisy_data
from adaptdp.regularizers import ProjectedOperator
from adaptdp.stopping import (
    Flag,
    StoppingConfig,
    algorithm1_modified_dp,
    algorithm2_modified_dp_tikhonov,
    early_stopping_dp,
    ladder_discrepancy,
    naive_max_rule,
)
from adaptdp.testproblems import (
    TestProblemSpec,
    build_ladder,
    counterexample_problem,
    gen_diagonal,
)
from adaptdp.theory import (
    IllPosednessProfile,
    SourceCondition,
    empirical_oracle,
    oracle_k_values,
    theta_inverse,
)

RULES = ("algorithm1", "algorithm2", "naive_max", "early_stopping", "oracle")
COST_MODELS = ("paper", "flops")
# ``*_bar`` columns: naive max-rule for the dp quantities, medians for early stopping
TABLE_COLUMNS = ("delta", "e_dp", "e_dp_bar", "e_es", "e_es_bar", "c_dp", "c_es", "c_es_bar", "m_dp", "m_dp_bar")
RUN_COLUMNS = (
    "delta",
    "run",
    "seed",
    "rule",
    "error",
    "m",
    "k",
    "alpha",
    "flag",
    "rounds",
    "cost_paper",
    "cost_flops",
    "noise_hash",
    "levels",
)

# experiment preset for the ratio threshold of the modified rule
EXPERIMENT_ETA = 0.5


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines an experiment; the report is a pure function of it."""

    problem: TestProblemSpec = field(default_factory=lambda: TestProblemSpec("phillips", 512))
    noise_kind: str = "gaussian"
    noise_df: float = 5.0
    deltas: tuple[float, ...] = (1.0, 1e-2, 1e-4)
    runs: int = 20
    stopping: StoppingConfig = field(
        default_factory=lambda: StoppingConfig(tau=1.5, eta=EXPERIMENT_ETA, max_iterations=10_000_000)
    )
    rules: tuple[str, ...] = ("algorithm1", "naive_max", "early_stopping")
    cost_model: str = "paper"
    oracle_k_max: int = 10_000_000
    base_seed: int = 0
    output_dir: str = "results"
    prefix: str = ""

    def __post_init__(self):
        if self.runs < 1:
            raise ConfigurationError("run count must be at least 1")
        if not self.deltas:
            raise ConfigurationError("need at least one noise level")
        if any(not (d >= 0 and math.isfinite(d)) for d in self.deltas):
            raise ConfigurationError("noise levels must be finite and non-negative")
        if not self.rules:
            raise ConfigurationError("need at least one rule")
        bad = [r for r in self.rules if r not in RULES]
        if bad:
            raise ConfigurationError(f"unknown rules {bad}; choose from {RULES}")
        if self.cost_model not in COST_MODELS:
            raise ConfigurationError(f"cost model must be one of {COST_MODELS}")
        NoiseModel(1.0, self.noise_kind, 0, self.noise_df)  # validates the noise kind

    @classmethod
    def desk(cls, **overrides):
        return replace(cls(), **overrides)

    @classmethod
    def full(cls, problem="phillips", **overrides):
        base = cls(
            problem=TestProblemSpec(problem, 4096),
            runs=100,
            stopping=StoppingConfig(tau=1.5, eta=EXPERIMENT_ETA, max_iterations=500_000_000),
            oracle_k_max=500_000_000,
        )
        return replace(base, **overrides)

    def canonical(self):
        """Stable text form used for hashing; output paths are excluded."""
        d = asdict(self)
        d.pop("output_dir")
        d.pop("prefix")
        lines = []
        for key in sorted(d):
            val = d[key]
            if isinstance(val, dict):
                for sub in sorted(val):
                    lines.append(f"{key}.{sub}={val[sub]!r}")
            else:
                lines.append(f"{key}={val!r}")
        return "\n".join(lines)

    def config_hash(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


def _parse_list(text, conv=str):
    return tuple(conv(v.strip()) for v in text.replace(";", ",").split(",") if v.strip())


def load_config(path_or_text, **overrides):
    """Read an INI-style config (``[section]`` headers, ``key = value`` lines).

    Sections and keys (all optional)::

        [problem]    name, dimension, depth, kappa
        [noise]      kind, df, deltas (comma separated)
        [experiment] runs, rules, cost_model, base_seed, oracle_k_max
        [stopping]   tau, eta, q, shrink, tikhonov_threshold, max_iterations, grid_depth, engine
        [output]     directory, prefix
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    text = str(path_or_text)
    if "\n" not in text and Path(text).is_file():
        text = Path(text).read_text()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config: {exc}") from exc
    known = {"problem", "noise", "experiment", "stopping", "output"}
    unknown = set(parser.sections()) - known
    if unknown:
        raise ConfigurationError(f"unknown config sections {sorted(unknown)}")

    def get(section, key, conv, default):
        if parser.has_option(section, key):
            try:
                return conv(parser.get(section, key))
            except ValueError as exc:
                raise ConfigurationError(f"bad value for {section}.{key}: {exc}") from exc
        return default

    base = ExperimentConfig()
    problem = TestProblemSpec(
        get("problem", "name", str, base.problem.name),
        get("problem", "dimension", int, base.problem.dimension),
        get("problem", "depth", float, base.problem.depth),
        get("problem", "kappa", float, base.problem.kappa),
    )
    st = base.stopping
    opt_float = lambda v: None if v.strip().lower() in ("", "default", "none") else float(v)  # noqa: E731
    stopping = StoppingConfig(
        tau=get("stopping", "tau", float, st.tau),
        eta=get("stopping", "eta", opt_float, st.eta),
        q=get("stopping", "q", float, st.q),
        shrink=get("stopping", "shrink", opt_float, None),
        tikhonov_threshold=get("stopping", "tikhonov_threshold", opt_float, None),
        max_iterations=get("stopping", "max_iterations", lambda v: int(float(v)), st.max_iterations),
        grid_depth=get("stopping", "grid_depth", int, st.grid_depth),
        engine=get("stopping", "engine", str, st.engine),
    )
    cfg = ExperimentConfig(
        problem=problem,
        noise_kind=get("noise", "kind", str, base.noise_kind),
        noise_df=get("noise", "df", float, base.noise_df),
        deltas=get("noise", "deltas", lambda v: _parse_list(v, float), base.deltas),
        runs=get("experiment", "runs", int, base.runs),
        stopping=stopping,
        rules=get("experiment", "rules", _parse_list, base.rules),
        cost_model=get("experiment", "cost_model", str, base.cost_model),
        oracle_k_max=get("experiment", "oracle_k_max", lambda v: int(float(v)), base.oracle_k_max),
        base_seed=get("experiment", "base_seed", int, base.base_seed),
        output_dir=get("output", "directory", str, base.output_dir),
        prefix=get("output", "prefix", str, base.prefix),
    )
    return replace(cfg, **overrides) if overrides else cfg


def dump_config(config: ExperimentConfig):
    """Inverse of :func:`load_config`."""
    st = config.stopping
    p = config.problem
    return (
        "[problem]\n"
        f"name = {p.name}\ndimension = {p.dimension}\ndepth = {p.depth!r}\nkappa = {p.kappa!r}\n\n"
        "[noise]\n"
        f"kind = {config.noise_kind}\ndf = {config.noise_df!r}\n"
        f"deltas = {', '.join(repr(float(d)) for d in config.deltas)}\n\n"
        "[experiment]\n"
        f"runs = {config.runs}\nrules = {', '.join(config.rules)}\ncost_model = {config.cost_model}\n"
        f"base_seed = {config.base_seed}\noracle_k_max = {config.oracle_k_max}\n\n"
        "[stopping]\n"
        f"tau = {st.tau!r}\neta = {st.eta!r}\nq = {st.q!r}\nshrink = {st.shrink!r}\n"
        f"tikhonov_threshold = {st.tikhonov_threshold!r}\nmax_iterations = {st.max_iterations}\n"
        f"grid_depth = {st.grid_depth}\nengine = {st.engine}\n\n"
        "[output]\n"
        f"directory = {config.output_dir}\nprefix = {config.prefix}\n"
    )


@dataclass
class RunRecord:
    delta: float
    run: int
    seed: int
    rule: str
    error: float
    m: int
    k: int | None
    alpha: float | None
    flag: str
    rounds: int
    cost_paper: float
    cost_flops: float
    noise_hash: str
    levels: str = ""

    def row(self):
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, float):
                return repr(v)
            return str(v)

        return [fmt(getattr(self, c)) for c in RUN_COLUMNS]

    @classmethod
    def from_row(cls, row: dict):
        def opt(v, conv):
            return None if v == "" else conv(v)

        return cls(
            delta=float(row["delta"]),
            run=int(row["run"]),
            seed=int(row["seed"]),
            rule=row["rule"],
            error=float(row["error"]),
            m=int(row["m"]),
            k=opt(row["k"], int),
            alpha=opt(row["alpha"], float),
            flag=row["flag"],
            rounds=int(row["rounds"]),
            cost_paper=float(row["cost_paper"]),
            cost_flops=float(row["cost_flops"]),
            noise_hash=row["noise_hash"],
            levels=row.get("levels", ""),
        )

    def to_record(self):
        return "\n".join(f"{c}={v}" for c, v in zip(RUN_COLUMNS, self.row())) + "\n"

    def level_ks(self):
        """``{m: k}`` parsed from the per-level trace."""
        out = {}
        for item in filter(None, self.levels.split(";")):
            m, k = item.split(":")[:2]
            out[int(m)] = float(k)
        return out


@dataclass
class Aggregate:
    n: int
    mean_error: float
    median_error: float
    mean_cost_paper: float
    median_cost_paper: float
    mean_cost_flops: float
    median_cost_flops: float
    mean_m: float
    capped: int
    failed: int


def aggregate_records(records):
    err = np.array([r.error for r in records], dtype=float)
    cp = np.array([r.cost_paper for r in records], dtype=float)
    cf = np.array([r.cost_flops for r in records], dtype=float)
    m = np.array([r.m for r in records], dtype=float)
    return Aggregate(
        n=len(records),
        mean_error=float(np.mean(err)),
        median_error=float(np.median(err)),
        mean_cost_paper=float(np.mean(cp)),
        median_cost_paper=float(np.median(cp)),
        mean_cost_flops=float(np.mean(cf)),
        median_cost_flops=float(np.median(cf)),
        mean_m=float(np.mean(m)),
        capped=sum(r.flag == Flag.CAP_REACHED.value for r in records),
        failed=sum(r.flag.startswith("Error") for r in records),
    )


@dataclass
class ExperimentReport:
    config: ExperimentConfig | None
    records: list[RunRecord]
    deltas: tuple[float, ...]
    rules: tuple[str, ...]
    seeds: tuple[int, ...] = ()
    wall_time: float = 0.0

    def select(self, delta, rule):
        return [r for r in self.records if r.delta == delta and r.rule == rule]

    def aggregates(self):
        """``{(delta, rule): Aggregate}`` folded in run-index order."""
        out = {}
        for d in self.deltas:
            for rule in self.rules:
                recs = sorted(self.select(d, rule), key=lambda r: r.run)
                if recs:
                    out[(d, rule)] = aggregate_records(recs)
        return out

    def metadata(self):
        cfg_hash = self.config.config_hash() if self.config is not None else ""
        return {
            "config_hash": cfg_hash,
            "seeds": ",".join(str(s) for s in self.seeds),
            "records": len(self.records),
            "wall_time": f"{self.wall_time:.3f}",
        }

    def runs_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RUN_COLUMNS)
        for r in self.records:
            w.writerow(r.row())
        return buf.getvalue()

    def run_log(self):
        return "\n".join(r.to_record() for r in self.records)

    @classmethod
    def from_runs_csv(cls, text):
        reader = csv.DictReader(io.StringIO(text))
        records = [RunRecord.from_row(row) for row in reader]
        deltas = tuple(dict.fromkeys(r.delta for r in records))
        rules = tuple(dict.fromkeys(r.rule for r in records))
        seeds = tuple(sorted({r.seed for r in records}))
        return cls(None, records, deltas, rules, seeds)


class ExperimentSetup:
    """Noise-independent objects of an experiment, built once and reused across runs."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.problem = config.problem.generate()
        D = self.problem.dimension
        self.ladder = build_ladder(D, "averaging")
        self.levels = self.ladder.operators(self.problem)
        self._full = None

    @property
    def full_operator(self):
        if self._full is None:
            self._full = ProjectedOperator.build(self.problem)
        return self._full


def _noise_hash(ydelta):
    return hashlib.sha256(np.ascontiguousarray(ydelta).tobytes()).hexdigest()[:16]


def _levels_trace(report):
    return ";".join(f"{rec.m}:{rec.k}" for rec in report.levels)


def _evaluate(rule, setup, ydelta, delta_s, results_cache):
    cfg = setup.config.stopping
    levels = setup.levels
    if rule in ("algorithm1", "naive_max"):
        if "ladder" not in results_cache:
            results_cache["ladder"] = ladder_discrepancy(levels, ydelta, delta_s, cfg)
        fn = algorithm1_modified_dp if rule == "algorithm1" else naive_max_rule
        return fn(levels, ydelta, delta_s, cfg, results=results_cache["ladder"])
    if rule == "algorithm2":
        return algorithm2_modified_dp_tikhonov(levels, ydelta, delta_s, cfg)
    if rule == "early_stopping":
        return early_stopping_dp(setup.full_operator, ydelta, delta_s, cfg.max_iterations, cfg.engine)
    raise ConfigurationError(f"unknown rule {rule!r}")


def _oracle_record(setup, ydelta, base):
    x_true = setup.problem.exact_solution
    ks = oracle_k_values(setup.config.oracle_k_max)
    res = empirical_oracle(setup.levels, ydelta, x_true, k_values=ks)
    return replace(base, error=res.error, m=res.m, k=res.k, flag=Flag.CONVERGED.value)


def run_experiment(config: ExperimentConfig, setup: ExperimentSetup | None = None):
    """Paired Monte Carlo comparison of the configured rules.

    Run ``i`` at every noise level uses seed ``base_seed + i``; all rules in
    that run see the same noisy data. A rule that raises is recorded with an
    ``Error:<type>`` flag and NaN error instead of aborting the experiment.
    """
    t0 = time.perf_counter()
    setup = setup or ExperimentSetup(config)
    problem = setup.problem
    x_true = problem.exact_solution
    records = []
    seeds = tuple(config.base_seed + i for i in range(config.runs))
    for delta in config.deltas:
        delta_s = delta  # noise levels refer to the rescaled problem
        for run, seed in enumerate(seeds):
            noise = NoiseModel(delta, config.noise_kind, seed, config.noise_df)
            ydelta = sample_noisy_data(problem, noise)
            nh = _noise_hash(ydelta)
            cache = {}
            for rule in config.rules:
                base = RunRecord(delta, run, seed, rule, math.nan, 0, None, None, "", 0, 0.0, 0.0, nh)
                try:
                    if rule == "oracle":
                        records.append(_oracle_record(setup, ydelta, base))
                        continue
                    rep = _evaluate(rule, setup, ydelta, delta_s, cache)
                    err = float(np.linalg.norm(rep.solution - x_true))
                    records.append(
                        replace(
                            base,
                            error=err,
                            m=rep.m,
                            k=rep.k,
                            alpha=None if rep.alpha is None else float(rep.alpha),
                            flag=str(rep.flag),
                            rounds=rep.rounds,
                            cost_paper=float(rep.cost_paper),
                            cost_flops=float(rep.cost_flops),
                            levels=_levels_trace(rep),
                        )
                    )
                except (AdaptDPError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
                    records.append(replace(base, flag=f"Error:{type(exc).__name__}"))
    return ExperimentReport(config, records, tuple(config.deltas), tuple(config.rules), seeds, time.perf_counter() - t0)


def complexity_counters(report: ExperimentReport, delta, cost_model="paper"):
    """``(c_dp, c_es, median c_es)`` at one noise level.

    ``c_dp`` is the mean over runs of ``sum_l k_dp(m_l) * cost(m_l)`` for the
    modified rule and ``c_es`` the mean of ``k_es * cost(D)``; the cost of one
    step is ``m^2`` in paper mode and ``2 m D`` in flops mode.
    """
    if cost_model not in COST_MODELS:
        raise ConfigurationError(f"cost model must be one of {COST_MODELS}")
    key = "cost_paper" if cost_model == "paper" else "cost_flops"
    dp = report.select(delta, "algorithm1") or report.select(delta, "naive_max")
    es = report.select(delta, "early_stopping")
    if not dp or not es:
        raise ConfigurationError("report lacks the traces for complexity counters")
    c_dp = float(np.mean([getattr(r, key) for r in dp]))
    es_costs = [getattr(r, key) for r in es]
    return c_dp, float(np.mean(es_costs)), float(np.median(es_costs))


def recompute_flops(record: RunRecord, dimension):
    """Flops-mode cost rebuilt from the per-level trace: ``sum_l k_l 2 m_l D``."""
    return float(sum(k * 2 * m * dimension for m, k in record.level_ks().items()))


def table_rows(report: ExperimentReport, cost_model="paper"):
    """One row per noise level with the columns of :data:`TABLE_COLUMNS`.

    ``e_dp``, ``c_dp`` and ``m_dp`` are means for the modified rule;
    ``e_dp_bar`` and ``m_dp_bar`` are the same means for the naive max-rule;
    ``e_es`` and ``c_es`` are early-stopping means and ``e_es_bar`` and
    ``c_es_bar`` their medians. Missing rules give NaN cells.
    """
    if not report.rules:
        return []
    agg = report.aggregates()
    paper = cost_model == "paper"
    nan = math.nan
    rows = []
    for d in report.deltas:
        dp = agg.get((d, "algorithm1"))
        es = agg.get((d, "early_stopping"))
        nv = agg.get((d, "naive_max"))
        rows.append(
            {
                "delta": d,
                "e_dp": dp.mean_error if dp else nan,
                "e_dp_bar": nv.mean_error if nv else nan,
                "e_es": es.mean_error if es else nan,
                "e_es_bar": es.median_error if es else nan,
                "c_dp": (dp.mean_cost_paper if paper else dp.mean_cost_flops) if dp else nan,
                "c_es": (es.mean_cost_paper if paper else es.mean_cost_flops) if es else nan,
                "c_es_bar": (es.median_cost_paper if paper else es.median_cost_flops) if es else nan,
                "m_dp": dp.mean_m if dp else nan,
                "m_dp_bar": nv.mean_m if nv else nan,
            }
        )
    return rows


def sci2(v):
    """Scientific notation with two significant digits (``nan`` for missing)."""
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "nan"
    return f"{v:.1e}"


def tables_csv(rows):
    """Full-precision CSV of the table rows (parses back to the same floats)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_COLUMNS)
    for row in rows:
        w.writerow([repr(float(row[c])) for c in TABLE_COLUMNS])
    return buf.getvalue()


def parse_tables_csv(text):
    reader = csv.DictReader(io.StringIO(text))
    return [{c: float(row[c]) for c in TABLE_COLUMNS} for row in reader]


def tables_text(rows, title=""):
    """Aligned text table with two significant digits."""
    cells = [list(TABLE_COLUMNS)] + [[sci2(row[c]) for c in TABLE_COLUMNS] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(TABLE_COLUMNS))]
    lines = [title] if title else []
    for r in cells:
        lines.append("  ".join(c.rjust(w) for c, w in zip(r, widths)))
    return "\n".join(lines) + "\n"


def emit_tables(report: ExperimentReport, directory=None, cost_model="paper", fmt=("csv", "txt"), stem="tables"):
    """Write ``<stem>.csv`` and/or ``<stem>.txt``; returns ``{format: text}``."""
    rows = table_rows(report, cost_model)
    title = ""
    if report.config is not None:
        title = f"{report.config.problem.name} D={report.config.problem.dimension} cost={cost_model}"
    out = {}
    if "csv" in fmt:
        out["csv"] = tables_csv(rows)
    if "txt" in fmt:
        out["txt"] = tables_text(rows, title)
    if directory is not None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for ext, text in out.items():
            (d / f"{stem}.{ext}").write_text(text)
    return out


def write_report(report: ExperimentReport, directory, prefix="", cost_model="paper"):
    """Write runs CSV, run log, tables and metadata; returns the written paths."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = {
        "runs": d / f"{prefix}runs.csv",
        "log": d / f"{prefix}runs.log",
        "meta": d / f"{prefix}meta.txt",
    }
    paths["runs"].write_text(report.runs_csv())
    paths["log"].write_text(report.run_log())
    meta = report.metadata()
    paths["meta"].write_text("".join(f"{k}={v}\n" for k, v in meta.items()))
    emit_tables(report, d, cost_model, stem=f"{prefix}tables")
    paths["tables_csv"] = d / f"{prefix}tables.csv"
    paths["tables_txt"] = d / f"{prefix}tables.txt"
    return paths


# --- counterexample -------------------------------------------------------


@dataclass
class CounterexampleRow:
    k: int
    delta: float
    trials: int
    naive_m1: float
    alg1_m1: float
    naive_fail: float
    alg1_fail: float
    naive_far: float = math.nan
    alg1_far: float = math.nan

    @property
    def naive_fail_se(self):
        p = self.naive_fail
        return math.sqrt(p * (1 - p) / self.trials)

    def bound_ok(self, bound=1.0 / 48.0, n_se=3.0):
        """``P(error > limit) >= bound - n_se`` standard errors for the naive rule."""
        return self.naive_fail >= bound - n_se * self.naive_fail_se


@dataclass
class CounterexampleConfig:
    """``limit`` is the error threshold counted as failure; ``far`` a second,
    reported threshold (default: the distance from ``span(v_1)`` to ``x``)."""

    k_values: tuple[int, ...] = (30, 50, 70)
    trials: int = 2000
    tau: float = 2.0
    sigma1: float = 0.9
    N: int = 2048
    eta: float | None = None
    seed: int = 0
    second: float = 0.5
    limit: float = 1.0 / math.sqrt(2.0)
    far: float | None = None


def counterexample_experiment(config: CounterexampleConfig | None = None):
    """Frequencies of ``m = 1`` and of large errors for both Landweber rules.

    The ladder is ``1, 2, 4, ..., N`` in the coordinate basis of the diagonal
    problem. Trial ``i`` uses seed ``seed + i`` for every ``k`` and both
    rules see the same noisy data.
    """
    config = config or CounterexampleConfig()
    if config.trials < 1:
        raise ConfigurationError("need at least one trial")
    far = abs(config.second) if config.far is None else config.far
    rows = []
    for k in config.k_values:
        problem, system, delta = counterexample_problem(config.sigma1, config.N, k, config.tau, config.second)
        levels = build_ladder(config.N, "svd", include_one=True).operators(problem, system)
        stop = StoppingConfig(tau=config.tau, eta=config.eta)
        x_true = problem.exact_solution
        n_m1 = np.zeros(2, dtype=int)
        n_fail = np.zeros(2, dtype=int)
        n_far = np.zeros(2, dtype=int)
        for i in range(config.trials):
            y = sample_noisy_data(problem, NoiseModel(delta, "gaussian", config.seed + i))
            results = ladder_discrepancy(levels, y, delta, stop)
            for j, fn in enumerate((naive_max_rule, algorithm1_modified_dp)):
                rep = fn(levels, y, delta, stop, results=results)
                err = np.linalg.norm(rep.solution - x_true)
                n_m1[j] += rep.m == 1
                n_fail[j] += err > config.limit
                n_far[j] += err >= far * (1 - 1e-12)
        t = config.trials
        rows.append(
            CounterexampleRow(
                k, delta, t, n_m1[0] / t, n_m1[1] / t, n_fail[0] / t, n_fail[1] / t, n_far[0] / t, n_far[1] / t
            )
        )
    return rows


def counterexample_text(rows, limit=1.0 / math.sqrt(2.0), far=0.5):
    head = (
        "k",
        "delta",
        "trials",
        "P_naive(m=1)",
        "P_alg1(m=1)",
        f"P_naive(err>{limit:.4g})",
        f"P_alg1(err>{limit:.4g})",
        f"P_naive(err>={far:.4g})",
        f"P_alg1(err>={far:.4g})",
    )
    cells = [list(head)] + [
        [str(r.k), sci2(r.delta), str(r.trials)]
        + [f"{v:.4f}" for v in (r.naive_m1, r.alg1_m1, r.naive_fail, r.alg1_fail, r.naive_far, r.alg1_far)]
        for r in rows
    ]
    widths = [max(len(c[i]) for c in cells) for i in range(len(head))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells) + "\n"


# --- rate study -----------------------------------------------------------


@dataclass
class RateStudyConfig:
    q: float = 2.0
    nu: float = 1.0
    rho: float = 1.0
    N: int = 1024
    deltas: tuple[float, ...] = tuple(float(d) for d in np.geomspace(1e-1, 1e-4, 7))
    runs: int = 20
    tau: float = 1.5
    eta: float | None = None
    seed: int = 0


@dataclass
class RateReport:
    deltas: np.ndarray
    median_error: np.ndarray
    bound: np.ndarray
    ratios: np.ndarray  # runs x deltas
    empirical_slope: float
    theory_slope: float

    @property
    def median_ratio(self):
        return float(np.median(self.ratios))

    @property
    def max_ratio(self):
        return float(np.max(self.ratios))


def rate_solution(profile: IllPosednessProfile, source: SourceCondition, rho=1.0):
    """``x = phi(sigma^2) xi`` with ``xi_j`` proportional to ``j^(-1/2)`` and ``||xi|| = rho``.

    Equal mass per dyadic block of ``xi`` makes the bias decay at the
    worst-case rate across all scales.
    """
    j = np.arange(1, profile.length + 1, dtype=float)
    xi = j**-0.5
    xi *= rho / np.linalg.norm(xi)
    return source.phi(profile.sigma_sq) * xi


def fit_slope(x, y):
    slope, _ = np.polyfit(np.log(x), np.log(y), 1)
    return float(slope)


def rate_study(config: RateStudyConfig | None = None):
    """Empirical convergence rate of the modified rule against ``rho phi(Theta^{-1}(delta^2/rho^2))``."""
    config = config or RateStudyConfig()
    deltas = np.asarray(config.deltas, dtype=float)
    if deltas.size < 4:
        raise ConfigurationError("rate study needs at least four noise levels")
    if np.any(deltas <= 0):
        raise ParameterError("noise levels must be positive")
    profile = IllPosednessProfile.polynomial(config.q, config.N)
    source = SourceCondition.holder(config.nu, config.rho)
    x_true = rate_solution(profile, source, config.rho)
    problem, system = gen_diagonal(np.sqrt(profile.sigma_sq), x_true, name="rate")
    levels = build_ladder(config.N, "svd", include_one=True).operators(problem, system)
    stop = StoppingConfig(tau=config.tau, eta=config.eta)
    bound = np.array(
        [config.rho * float(source.phi(theta_inverse(profile, source, d**2 / config.rho**2))) for d in deltas]
    )
    errors = np.empty((config.runs, deltas.size))
    for i, d in enumerate(deltas):
        for run in range(config.runs):
            y = sample_noisy_data(problem, NoiseModel(float(d), "gaussian", config.seed + run))
            rep = algorithm1_modified_dp(levels, y, float(d), stop)
            errors[run, i] = np.linalg.norm(rep.solution - x_true)
    med = np.median(errors, axis=0)
    return RateReport(deltas, med, bound, errors / bound[None, :], fit_slope(deltas, med), fit_slope(deltas, bound))


__all__ = [
    "RULES",
    "TABLE_COLUMNS",
    "ExperimentConfig",
    "ExperimentReport",
    "ExperimentSetup",
    "RunRecord",
    "Aggregate",
    "aggregate_records",
    "load_config",
    "dump_config",
    "run_experiment",
    "complexity_counters",
    "recompute_flops",
    "table_rows",
    "emit_tables",
    "parse_tables_csv",
    "write_report",
    "CounterexampleConfig",
    "CounterexampleRow",
    "counterexample_experiment",
    "counterexample_text",
    "RateStudyConfig",
    "RateReport",
    "rate_study",
]
