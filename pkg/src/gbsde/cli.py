"""Command-line entry point.

Loads a problem file, dispatches to the solvers and experiments, and
writes CSV/JSON artifacts.  Exit codes: 0 success, 1 assumption
validation failed (report printed), 2 solver divergence, 64 malformed
configuration.  All floating-point output uses 17 significant digits so
reruns with identical flags, files, and seed are byte-comparable.
"""

import argparse
import hashlib
import os
import sys

from . import backend, gsim, harness, latticebsde, pdesolve
from .coeffexpr import load_problem, parse, validate
from .errors import (
    DivergenceError,
    Error,
    ExprSyntaxError,
    ScenarioError,
    SchemaError,
    StabilityError,
    UsageError,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_DIVERGED = 2
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    top = _Parser(prog="gbsde", description=__doc__)
    top.add_argument("--threads", type=int, default=None, help="cap worker threads (>=1)")
    sub = top.add_subparsers(dest="command", metavar="command")

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--problem", required=True, help="problem JSON file")
        p.add_argument("--out-dir", default=".", help="artifact directory")
        p.add_argument("--density", type=int, default=9, help="validation samples per axis")
        return p

    p = add("validate", "check declared assumption bounds on a sample lattice")

    p = add("solve", "terminal-value solve; writes u.csv")
    p.add_argument("--nx", type=int, required=True)
    p.add_argument("--nt", type=int, required=True)

    p = add("obstacle", "obstacle solve by projection or penalty; writes u.csv")
    p.add_argument("--nx", type=int, required=True)
    p.add_argument("--nt", type=int, required=True)
    p.add_argument("--method", choices=("projection", "penalized"), default="projection")
    p.add_argument("--n", type=float, default=None, help="penalty level (penalized method)")

    p = add("penalty", "penalty sweep; writes penalty_report.csv + summary.json")
    p.add_argument("--nx", type=int, required=True)
    p.add_argument("--nt", type=int, required=True)
    p.add_argument("--n", required=True, help="comma-separated increasing penalty levels")
    p.add_argument("--seed", type=int, default=None)

    p = add("compare", "ordered-pair comparison suite; writes compare_report.csv + summary.json")
    p.add_argument("--nx", type=int, required=True)
    p.add_argument("--nt", type=int, required=True)
    p.add_argument("--pairs", type=int, default=10, help="number of ordered pairs to generate")
    p.add_argument("--delta", type=float, default=0.1, help="base perturbation size")

    p = add("crosscheck", "cross-route agreement report; writes crosscheck_report.csv + summary.json")
    p.add_argument("--nx", type=int, required=True)
    p.add_argument("--nt", type=int, required=True)
    p.add_argument("--scenarios", default=None, help="comma-separated constant levels")
    p.add_argument("--paths", type=int, default=100000)
    p.add_argument("--mc-nt", type=int, default=None, help="Monte Carlo steps (default nt)")
    p.add_argument("--seed", type=int, default=None)

    p = add("simulate", "scenario path simulation; writes simulate_summary.json")
    p.add_argument("--scenario", required=True, help="level, or segments t=v,t=v,...")
    p.add_argument("--paths", type=int, required=True)
    p.add_argument("--nt", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--payoff", default=None, help="expression in x evaluated at X_T")
    p.add_argument("--export-paths", action="store_true", help="also write paths.csv")

    return top


def _parse_scenario(text: str) -> gsim.Scenario:
    text = text.strip()
    if "=" not in text:
        return gsim.Scenario.constant(float(text))
    bps, lvs = [], []
    for segment in text.split(","):
        try:
            b, v = segment.split("=")
            bps.append(float(b))
            lvs.append(float(v))
        except ValueError:
            raise UsageError(
                f"bad scenario segment {segment!r}; use LEVEL or t=LEVEL,t=LEVEL,..."
            ) from None
    return gsim.Scenario(tuple(bps), tuple(lvs))


def _parse_n_list(text: str):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad penalty list {text!r}; use comma-separated numbers") from None
    if not values:
        raise UsageError("penalty list is empty")
    return values


def _require_seed(args) -> int:
    if args.seed is None:
        raise UsageError(f"{args.command} is stochastic: the --seed flag is required")
    return args.seed


def _load(args):
    if not os.path.exists(args.problem):
        raise UsageError(f"problem file not found: {args.problem}")
    problem = load_problem(args.problem)
    for name in ("nx", "nt", "paths", "density", "mc_nt"):
        v = getattr(args, name, None)
        if v is not None and v <= 0:
            raise UsageError(f"--{name.replace('_', '-')} must be positive")
    return problem


def _validate_or_fail(problem, args) -> None:
    report = validate(problem, sample_density=args.density)
    if not report.passed:
        print("assumption validation failed:", file=sys.stderr)
        for line in report.lines():
            print("  " + line, file=sys.stderr)
        raise _ValidationFailed()


class _ValidationFailed(Exception):
    pass


def _file_digest(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()[:16]


def _run_config(args, **extra):
    cfg = {
        "command": args.command,
        "problem_sha": _file_digest(args.problem),
        **{k: v for k, v in vars(args).items() if k not in ("command", "out_dir")},
        **extra,
    }
    return cfg


def _out(args, name) -> str:
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, name)


def _cmd_validate(args) -> int:
    problem = _load(args)
    report = validate(problem, sample_density=args.density)
    for line in report.lines():
        print(line)
    return EXIT_OK if report.passed else EXIT_VALIDATION


def _cmd_solve(args) -> int:
    problem = _load(args)
    if problem.has_obstacle:
        raise UsageError("problem declares an obstacle; use the obstacle command")
    _validate_or_fail(problem, args)
    grid = pdesolve.build_grid(problem, args.nx, args.nt)
    field = pdesolve.solve_terminal(problem, grid)
    field.write_csv(_out(args, "u.csv"))
    print(f"u(0, x0) = {field.value_at_origin(problem.x0):.17g}")
    return EXIT_OK


def _cmd_obstacle(args) -> int:
    problem = _load(args)
    if not problem.has_obstacle:
        raise UsageError("problem declares no obstacle; use the solve command")
    _validate_or_fail(problem, args)
    grid = pdesolve.build_grid(problem, args.nx, args.nt)
    if args.method == "projection":
        field = pdesolve.solve_obstacle_projection(problem, grid)
    else:
        if args.n is None:
            raise UsageError("the penalized method needs the --n flag")
        field = pdesolve.solve_obstacle_penalized(problem, grid, args.n)
    field.write_csv(_out(args, "u.csv"))
    print(f"u(0, x0) = {field.value_at_origin(problem.x0):.17g}")
    return EXIT_OK


def _cmd_penalty(args) -> int:
    problem = _load(args)
    if not problem.has_obstacle:
        raise UsageError("penalty sweep needs a problem with an obstacle")
    _validate_or_fail(problem, args)
    n_list = _parse_n_list(args.n)
    grid = pdesolve.build_grid(problem, args.nx, args.nt)
    report = harness.run_penalty_sweep(problem, grid, n_list, config=_run_config(args))
    report.write_csv(_out(args, "penalty_report.csv"))
    report.write_summary(_out(args, "summary.json"))
    for a in report.assertions:
        print(f"{'pass' if a.passed else 'FAIL'} {a.name}: value={a.value:.6g} bound={a.bound:.6g}")
    return EXIT_OK if report.passed else EXIT_VALIDATION


def _standard_pairs(problem, count, delta):
    """Ordered (higher, lower) pairs by shifting terminal data,
    generators, and the obstacle when present."""
    kinds = ["phi", "f", "g"] + (["obstacle"] if problem.has_obstacle else [])
    pairs = []
    k = 0
    while len(pairs) < count:
        kind = kinds[k % len(kinds)]
        scale = 1.0 + 0.5 * (k // len(kinds))
        d = delta * scale
        if kind == "obstacle":
            pairs.append((problem, problem.with_shifted({"obstacle": -d})))
        else:
            pairs.append((problem.with_shifted({kind: d}), problem))
        k += 1
    return pairs


def _cmd_compare(args) -> int:
    problem = _load(args)
    _validate_or_fail(problem, args)
    grid = pdesolve.build_grid(problem, args.nx, args.nt)
    pairs = _standard_pairs(problem, args.pairs, args.delta)
    report = harness.run_comparison_suite(pairs, grid, config=_run_config(args))
    report.write_csv(_out(args, "compare_report.csv"))
    report.write_summary(_out(args, "summary.json"))
    bad = [a for a in report.assertions if not a.passed]
    print(f"{len(report.rows)} pairs, {len(bad)} failed assertions")
    return EXIT_OK if report.passed else EXIT_VALIDATION


def _cmd_crosscheck(args) -> int:
    problem = _load(args)
    if problem.has_obstacle:
        raise UsageError("crosscheck runs on problems without an obstacle")
    seed = _require_seed(args)
    _validate_or_fail(problem, args)
    grid = pdesolve.build_grid(problem, args.nx, args.nt)
    if args.scenarios:
        levels = [float(v) for v in args.scenarios.split(",") if v.strip()]
    else:
        lo, hi = problem.coeffs.sigma_low, problem.coeffs.sigma_high
        levels = [lo, 0.5 * (lo + hi), hi]
    scenarios = [gsim.Scenario.constant(v) for v in levels]
    mc = harness.MCConfig(n_paths=args.paths, nt=args.mc_nt or args.nt, seed=seed)
    report = harness.run_feynman_kac_crosscheck(
        problem, grid, scenarios, mc, config=_run_config(args)
    )
    report.write_csv(_out(args, "crosscheck_report.csv"))
    report.write_summary(_out(args, "summary.json"))
    for name, value in report.rows:
        print(f"{name} = {value if isinstance(value, str) else format(value, '.17g')}")
    return EXIT_OK if report.passed else EXIT_VALIDATION


def _cmd_simulate(args) -> int:
    problem = _load(args)
    seed = _require_seed(args)
    _validate_or_fail(problem, args)
    scenario = _parse_scenario(args.scenario)
    bundle = gsim.sample_paths(problem, scenario, args.paths, args.nt, seed)
    summary = {
        "command": "simulate",
        "config_hash": harness.config_hash(_run_config(args)),
        "n_paths": args.paths,
        "nt": args.nt,
        "seed": seed,
        "scenario": scenario.describe(),
        "X_T_mean": float(bundle.X[:, -1].mean()),
        "QV_T_max": float(bundle.QV[:, -1].max()),
    }
    if args.payoff is not None:
        est = gsim.estimate_upper_expectation(
            parse(args.payoff), problem, [scenario], args.paths, args.nt, seed
        )
        summary["payoff_mean"] = est.estimate
        summary["payoff_se"] = est.se
    if args.export_paths:
        bundle.write_csv(_out(args, "paths.csv"))
    import json

    with open(_out(args, "simulate_summary.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"simulated {args.paths} paths, X_T mean = {summary['X_T_mean']:.17g}")
    return EXIT_OK


_COMMANDS = {
    "validate": _cmd_validate,
    "solve": _cmd_solve,
    "obstacle": _cmd_obstacle,
    "penalty": _cmd_penalty,
    "compare": _cmd_compare,
    "crosscheck": _cmd_crosscheck,
    "simulate": _cmd_simulate,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("no command given")
        if args.threads is not None:
            if args.threads < 1:
                raise UsageError("--threads must be >= 1")
            backend.set_threads(args.threads)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except (SchemaError, ExprSyntaxError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _ValidationFailed:
        return EXIT_VALIDATION
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (StabilityError, ScenarioError, Error) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
