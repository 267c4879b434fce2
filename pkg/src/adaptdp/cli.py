"""Command-line entry point: ``adaptdp {gen,run,tables,counterexample,rates,selftest}``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from adaptdp import bench
from adaptdp.errors import AdaptDPError
from adaptdp.io import save_problem
from adaptdp.stopping import StoppingConfig
from adaptdp.testproblems import PROBLEMS, TestProblemSpec


def _floats(text):
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def _ints(text):
    return tuple(int(v) for v in text.replace(";", ",").split(",") if v.strip())


def _experiment_config(args):
    if args.full:
        cfg = bench.ExperimentConfig.full(args.problem or "phillips")
        if args.config:
            # file values override the full preset except where the file is silent
            cfg = bench.load_config(args.config)
            cfg = replace(
                cfg,
                problem=TestProblemSpec(cfg.problem.name, 4096, cfg.problem.depth, cfg.problem.kappa),
                runs=100,
                stopping=replace(cfg.stopping, max_iterations=500_000_000),
                oracle_k_max=500_000_000,
            )
    elif args.config:
        cfg = bench.load_config(args.config)
    else:
        cfg = bench.ExperimentConfig()
    over = {}
    if args.problem:
        over["problem"] = TestProblemSpec(args.problem, args.dimension or cfg.problem.dimension)
    elif args.dimension:
        over["problem"] = replace(cfg.problem, dimension=args.dimension)
    if args.delta:
        over["deltas"] = args.delta
    if args.runs is not None:
        over["runs"] = args.runs
    if args.seed is not None:
        over["base_seed"] = args.seed
    if args.rules:
        over["rules"] = tuple(r.strip() for r in args.rules.split(",") if r.strip())
    if args.cost_model:
        over["cost_model"] = args.cost_model
    if args.out:
        over["output_dir"] = args.out
    st = cfg.stopping
    if args.tau is not None or args.eta is not None or args.cap is not None:
        over["stopping"] = StoppingConfig(
            tau=st.tau if args.tau is None else args.tau,
            eta=st.eta if args.eta is None else args.eta,
            q=st.q,
            max_iterations=st.max_iterations if args.cap is None else args.cap,
            grid_depth=st.grid_depth,
            engine=st.engine,
        )
    return replace(cfg, **over) if over else cfg


def cmd_gen(args):
    names = PROBLEMS if args.problem == "all" else (args.problem,)
    for name in names:
        problem = TestProblemSpec(name, args.dimension).generate()
        paths = save_problem(problem, args.out, args.format)
        for role, path in paths.items():
            print(f"{name} {role} {path}")
        print(f"{name} operator_scale={problem.operator_scale!r}")
    return 0


def cmd_run(args):
    cfg = _experiment_config(args)
    report = bench.run_experiment(cfg)
    paths = bench.write_report(report, cfg.output_dir, cfg.prefix, cfg.cost_model)
    (Path(cfg.output_dir) / f"{cfg.prefix}config.ini").write_text(bench.dump_config(cfg))
    print(Path(paths["tables_txt"]).read_text(), end="")
    failed = sum(r.flag.startswith("Error") for r in report.records)
    capped = sum(r.flag == "CapReached" for r in report.records)
    print(f"records={len(report.records)} capped={capped} failed={failed} wall_time={report.wall_time:.2f}s")
    print(f"outputs in {cfg.output_dir}")
    return 0


def cmd_tables(args):
    text = Path(args.runs_csv).read_text()
    report = bench.ExperimentReport.from_runs_csv(text)
    out = bench.emit_tables(report, args.out, args.cost_model or "paper")
    print(out["txt"], end="")
    return 0


def cmd_counterexample(args):
    cfg = bench.CounterexampleConfig(
        k_values=args.k,
        trials=args.trials,
        tau=args.tau if args.tau is not None else 2.0,
        sigma1=args.sigma1,
        N=args.N,
        eta=args.eta,
        seed=args.seed or 0,
        second=args.second,
    )
    rows = bench.counterexample_experiment(cfg)
    text = bench.counterexample_text(rows, cfg.limit, abs(cfg.second))
    print(text, end="")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "counterexample.txt").write_text(text)
    return 0


def cmd_rates(args):
    cfg = bench.RateStudyConfig(
        q=args.q,
        nu=args.nu,
        N=args.N,
        runs=args.runs or 20,
        tau=args.tau if args.tau is not None else 1.5,
        eta=args.eta,
        seed=args.seed or 0,
    )
    if args.delta:
        cfg = replace(cfg, deltas=args.delta)
    rep = bench.rate_study(cfg)
    lines = ["delta,median_error,bound,median_ratio"]
    for i, d in enumerate(rep.deltas):
        vals = (d, rep.median_error[i], rep.bound[i], np.median(rep.ratios[:, i]))
        lines.append(",".join(repr(float(v)) for v in vals))
    lines.append(f"# empirical_slope={rep.empirical_slope:.4f} theory_slope={rep.theory_slope:.4f}")
    lines.append(f"# median_ratio={rep.median_ratio:.4f} max_ratio={rep.max_ratio:.4f}")
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "rates.csv").write_text(text)
    return 0


def selftest(verbose=True):
    """Quick internal property checks; returns the number of failures."""
    from adaptdp.problem import AveragingProjection, LinearProblem, NoiseModel, sample_noisy_data
    from adaptdp.regularizers import ProjectedOperator, landweber_recursion
    from adaptdp.stopping import Flag, discrepancy_index
    from adaptdp.testproblems import make_problem

    checks = []
    rng = np.random.default_rng(0)

    A = rng.standard_normal((24, 24))
    A /= np.linalg.norm(A, 2) * 1.01
    prob = LinearProblem.from_matrix(A, rng.standard_normal(24), normalise=False)
    op = ProjectedOperator.build(prob)
    y = prob.exact_data + 0.01 * rng.standard_normal(24)
    c, _ = op.coefficients(y)
    state = landweber_recursion(op, y, 200)
    diff = np.linalg.norm(state.iterate - op.landweber_iterate(c, 200))
    checks.append(("recursion equals closed form", diff <= 1e-10 * max(1.0, np.linalg.norm(state.iterate))))

    P = AveragingProjection(64, 8).matrix()
    checks.append(("averaging rows orthonormal", np.allclose(P @ P.T, np.eye(8), atol=1e-12)))

    z = NoiseModel(1.0, "student_t", 3).standard_sample(200_000)
    checks.append(("student-t unit variance", abs(np.var(z) - 1.0) < 0.05))

    p = make_problem("phillips", 64)
    levels = [ProjectedOperator.build(p, AveragingProjection(64, m)) for m in (2, 4, 8, 16, 32, 64)]
    ok = True
    for seed in range(5):
        yd = sample_noisy_data(p, NoiseModel(1e-2, "gaussian", seed))
        for lv in levels:
            r = discrepancy_index(lv, yd, 1e-2, 1.5, 10**6)
            if r.flag is Flag.CONVERGED and r.k > 0:
                res_prev = lv.landweber_residual(r.coeffs, r.floor_sq, r.k - 1)
                ok &= r.residual <= r.threshold < res_prev
    checks.append(("discrepancy postcondition", ok))

    cfg = bench.ExperimentConfig(problem=TestProblemSpec("deriv2", 64), deltas=(1e-2,), runs=2)
    a = bench.run_experiment(cfg).runs_csv()
    b = bench.run_experiment(cfg).runs_csv()
    checks.append(("deterministic runs", a == b))

    failures = 0
    for name, passed in checks:
        failures += not passed
        if verbose:
            print(f"{'PASS' if passed else 'FAIL'} {name}")
    return failures


def cmd_selftest(args):
    return 1 if selftest() else 0


def build_parser():
    parser = argparse.ArgumentParser(prog="adaptdp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--delta", type=_floats, help="comma separated noise levels")
        p.add_argument("--runs", type=int)
        p.add_argument("--tau", type=float)
        p.add_argument("--eta", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")

    g = sub.add_parser("gen", help="write test problem files")
    g.add_argument("--problem", default="all", choices=PROBLEMS + ("all",))
    g.add_argument("--dimension", type=int, default=512)
    g.add_argument("--format", choices=("binary", "csv"), default="binary")
    g.add_argument("--out", default="problems")
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="run a Monte Carlo experiment")
    r.add_argument("config", nargs="?", help="INI config file")
    common(r)
    r.add_argument("--problem", choices=PROBLEMS)
    r.add_argument("--dimension", type=int)
    r.add_argument("--rules", help=f"comma separated subset of {','.join(bench.RULES)}")
    r.add_argument("--cap", type=int, help="iteration cap per discrepancy search")
    r.add_argument("--full", action="store_true", help="D=4096, 100 runs, cap 5e8")
    r.add_argument("--cost-model", choices=bench.COST_MODELS)
    r.set_defaults(func=cmd_run)

    t = sub.add_parser("tables", help="aggregate a runs CSV into tables")
    t.add_argument("runs_csv")
    t.add_argument("--out")
    t.add_argument("--cost-model", choices=bench.COST_MODELS)
    t.set_defaults(func=cmd_tables)

    c = sub.add_parser("counterexample", help="naive max-rule failure frequencies")
    common(c)
    c.add_argument("--k", type=_ints, default=(30, 50, 70))
    c.add_argument("--trials", type=int, default=2000)
    c.add_argument("--sigma1", type=float, default=0.9)
    c.add_argument("--N", type=int, default=2048)
    c.add_argument("--second", type=float, default=0.5, help="coefficient of v_2 in the solution")
    c.set_defaults(func=cmd_counterexample)

    q = sub.add_parser("rates", help="convergence-rate study on a diagonal problem")
    common(q)
    q.add_argument("--q", type=float, default=2.0)
    q.add_argument("--nu", type=float, default=1.0)
    q.add_argument("--N", type=int, default=1024)
    q.set_defaults(func=cmd_rates)

    s = sub.add_parser("selftest", help="quick property checks")
    s.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except AdaptDPError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
