"""Desk-scale experiments cross-validating the three solution routes
(finite differences, lattice recursion, scenario Monte Carlo) and
exercising the qualitative properties the solvers are built to satisfy:
monotone penalty convergence, comparison under ordered data, first-order
stability in the terminal condition, and the scenario-sup lower bound.

Every experiment emits a CSV of rows plus a JSON summary
{experiment, config_hash, assertions: [{name, pass, value, bound}]};
assertion failures are recorded, never raised.
"""

import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import gsim, latticebsde, pdesolve, vm
from .coeffexpr import Problem
from .errors import Error
from .latticebsde import PENALTY_STEP_CAP

_ORDER_TOL = 1e-10


def config_hash(config) -> str:
    """Stable 16-hex digest of a JSON-serialisable configuration."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class Assertion:
    name: str
    passed: bool
    value: float
    bound: float

    def as_dict(self):
        return {"name": self.name, "pass": self.passed, "value": self.value, "bound": self.bound}


@dataclass(frozen=True)
class ExperimentReport:
    experiment: str
    config_hash: str
    assertions: tuple
    header: tuple
    rows: tuple

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(self.header) + "\n")
            for row in self.rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")

    def write_summary(self, path) -> None:
        doc = {
            "experiment": self.experiment,
            "config_hash": self.config_hash,
            "assertions": [a.as_dict() for a in self.assertions],
        }
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return f"{float(v):.17g}"


def _valid_values(sol: latticebsde.LatticeSolution) -> np.ndarray:
    return sol.Y[sol.lattice.valid_mask()]


def _obstacle_on_lattice(problem: Problem, lat: latticebsde.Lattice) -> np.ndarray:
    """Obstacle values on the lattice rectangle (NaN outside the wedge)."""
    out = np.full((lat.nt + 1, lat.width), np.nan)
    for i in range(lat.nt + 1):
        lev = lat.levels(i)
        out[i, lat.J + lev] = np.broadcast_to(
            vm.eval_vector(problem.program("obstacle"), t=i * lat.dt, x=lat.x_of(lev)),
            lev.shape,
        )
    return out


def _count_order_violations(hi: np.ndarray, lo: np.ndarray, tol: float = _ORDER_TOL) -> int:
    """Nodes where ``hi`` drops below ``lo`` beyond roundoff."""
    mask = np.isfinite(hi) & np.isfinite(lo)
    return int(np.sum(hi[mask] < lo[mask] - tol))


# ---------------------------------------------------------------------------
# Penalty sweep
# ---------------------------------------------------------------------------


def run_penalty_sweep(problem: Problem, grid: pdesolve.Grid, n_list, config=None) -> ExperimentReport:
    """Solve the penalized problem on both routes for each level in
    ``n_list`` (increasing) and check: node-wise monotonicity in n,
    nonincreasing obstacle shortfall with a small final value, geometric
    decay of successive doubling gaps, and an n-uniform value bound."""
    if not problem.has_obstacle:
        raise Error("penalty sweep requires an obstacle")
    n_list = [float(n) for n in n_list]
    if any(b <= a for a, b in zip(n_list, n_list[1:])) or not n_list:
        raise Error("n_list must be nonempty and strictly increasing")
    dt = grid.dt(problem.T)
    if dt * n_list[-1] > PENALTY_STEP_CAP + 1e-12:
        need = math.ceil(problem.T * n_list[-1] / PENALTY_STEP_CAP)
        raise Error(f"grid too coarse for n = {n_list[-1]:g}: need nt >= {need}")

    lat = latticebsde.build_lattice(problem, grid.nt, grid.nx)
    l_on_lat = _obstacle_on_lattice(problem, lat)
    xs = grid.xs()
    ts = grid.ts(problem.T)
    l_on_grid = np.broadcast_to(
        vm.eval_vector(problem.program("obstacle"), t=ts[:, None], x=xs[None, :]),
        (ts.size, xs.size),
    )

    rows = []
    lat_mono = fd_mono = 0
    prev_lat = prev_fd = None
    lat_shortfalls, lat_diffs, lat_bounds = [], [], []
    fd_shortfalls, fd_diffs, fd_bounds = [], [], []
    for n in n_list:
        t0 = time.perf_counter()
        sol = latticebsde.solve_penalized(lat, problem, n)
        fd = pdesolve.solve_obstacle_penalized(problem, grid, n)
        wall = time.perf_counter() - t0

        mask = lat.valid_mask()
        lat_short = float(np.max(np.maximum(l_on_lat[mask] - sol.Y[mask], 0.0)))
        fd_short = float(np.max(np.maximum(l_on_grid - fd.values, 0.0)))
        lat_bound = float(np.max(np.abs(sol.Y[mask])))
        fd_bound = float(np.max(np.abs(fd.values)))
        if prev_lat is None:
            lat_diff = fd_diff = float("nan")
        else:
            lat_diff = float(np.max(np.abs(sol.Y[mask] - prev_lat[mask])))
            fd_diff = float(np.max(np.abs(fd.values - prev_fd)))
            lat_mono += _count_order_violations(sol.Y, prev_lat)
            fd_mono += _count_order_violations(fd.values, prev_fd)
        rows.append((int(n), lat_short, lat_diff, lat_bound, fd_short, fd_diff, fd_bound, wall))
        lat_shortfalls.append(lat_short)
        fd_shortfalls.append(fd_short)
        lat_diffs.append(lat_diff)
        fd_diffs.append(fd_diff)
        lat_bounds.append(lat_bound)
        fd_bounds.append(fd_bound)
        prev_lat = sol.Y
        prev_fd = fd.values

    def nonincreasing(seq):
        return all(b <= a + 1e-12 for a, b in zip(seq, seq[1:]))

    def min_cauchy_factor(diffs):
        tail = [d for d in diffs if not math.isnan(d)][-4:]
        if len(tail) < 2:
            return float("inf")
        factors = [a / b if b > 0 else float("inf") for a, b in zip(tail, tail[1:])]
        return min(factors[-3:]) if factors else float("inf")

    def bound_spread(bounds):
        return (max(bounds) - min(bounds)) / max(max(bounds), 1e-300)

    assertions = (
        Assertion("lattice_monotone_in_n_violations", lat_mono == 0, lat_mono, 0),
        Assertion("fd_monotone_in_n_violations", fd_mono == 0, fd_mono, 0),
        Assertion("lattice_shortfall_nonincreasing", nonincreasing(lat_shortfalls),
                  float(np.max(np.diff(lat_shortfalls))) if len(lat_shortfalls) > 1 else 0.0, 0.0),
        Assertion("fd_shortfall_nonincreasing", nonincreasing(fd_shortfalls),
                  float(np.max(np.diff(fd_shortfalls))) if len(fd_shortfalls) > 1 else 0.0, 0.0),
        Assertion("lattice_final_shortfall", lat_shortfalls[-1] < 1e-2, lat_shortfalls[-1], 1e-2),
        Assertion("fd_final_shortfall", fd_shortfalls[-1] < 1e-2, fd_shortfalls[-1], 1e-2),
        Assertion("lattice_cauchy_factor_min", min_cauchy_factor(lat_diffs) >= 1.5,
                  min_cauchy_factor(lat_diffs), 1.5),
        Assertion("fd_cauchy_factor_min", min_cauchy_factor(fd_diffs) >= 1.5,
                  min_cauchy_factor(fd_diffs), 1.5),
        Assertion("lattice_bound_spread", bound_spread(lat_bounds) < 0.05,
                  bound_spread(lat_bounds), 0.05),
        Assertion("fd_bound_spread", bound_spread(fd_bounds) < 0.05,
                  bound_spread(fd_bounds), 0.05),
    )
    return ExperimentReport(
        experiment="penalty_sweep",
        config_hash=config_hash(config or {"n_list": n_list, "nx": grid.nx, "nt": grid.nt}),
        assertions=assertions,
        header=("n", "lattice_max_shortfall", "lattice_max_diff_prev", "lattice_max_abs_y",
                "fd_max_shortfall", "fd_max_diff_prev", "fd_max_abs_y", "wall_time_s"),
        rows=tuple(rows),
    )


# ---------------------------------------------------------------------------
# Comparison suite
# ---------------------------------------------------------------------------


def _sampled_pair_ordering(p_hi: Problem, p_lo: Problem, density: int = 7) -> bool:
    """Spot-check that (phi, f, g, l) of p_hi dominate those of p_lo."""
    ts = np.linspace(0.0, p_hi.T, density)
    xs = np.linspace(p_hi.x_lo, p_hi.x_hi, density)
    ys = np.linspace(-2.0, 2.0, density)
    zs = np.linspace(-2.0, 2.0, density)
    tg, xg, yg, zg = np.meshgrid(ts, xs, ys, zs, indexing="ij")

    def dominated(name, **kw):
        a = vm.eval_vector(p_hi.program(name), **kw)
        b = vm.eval_vector(p_lo.program(name), **kw)
        return bool(np.all(np.asarray(a - b) >= -_ORDER_TOL))

    ok = dominated("phi", x=xs)
    ok = ok and dominated("f", t=tg, x=xg, y=yg, z=zg)
    ok = ok and dominated("g", t=tg, x=xg, y=yg, z=zg)
    if p_hi.has_obstacle and p_lo.has_obstacle:
        ok = ok and dominated("obstacle", t=tg[..., 0, 0], x=xg[..., 0, 0])
    return ok


def run_comparison_suite(pairs, grid: pdesolve.Grid, config=None) -> ExperimentReport:
    """For each ordered pair (higher data, lower data), solve both
    problems on both routes and count node-wise ordering violations.
    Zero violations expected from the monotone schemes."""
    rows = []
    assertions = []
    for k, (p_hi, p_lo) in enumerate(pairs):
        if p_hi.has_obstacle != p_lo.has_obstacle:
            raise Error("pair members must both have or both lack an obstacle")
        ordered = _sampled_pair_ordering(p_hi, p_lo)
        if p_hi.has_obstacle:
            fd_hi = pdesolve.solve_obstacle_projection(p_hi, grid)
            fd_lo = pdesolve.solve_obstacle_projection(p_lo, grid)
            n_pen = min(64.0, PENALTY_STEP_CAP / grid.dt(p_hi.T))
        else:
            fd_hi = pdesolve.solve_terminal(p_hi, grid)
            fd_lo = pdesolve.solve_terminal(p_lo, grid)
            n_pen = 0.0
        lat = latticebsde.build_lattice(p_hi, grid.nt, grid.nx)
        sol_hi = latticebsde.solve_penalized(lat, p_hi, n_pen)
        sol_lo = latticebsde.solve_penalized(lat, p_lo, n_pen)

        viol_fd = _count_order_violations(fd_hi.values, fd_lo.values)
        viol_lat = _count_order_violations(sol_hi.Y, sol_lo.Y)
        mask = lat.valid_mask()
        min_gap_fd = float(np.min(fd_hi.values - fd_lo.values))
        min_gap_lat = float(np.min(sol_hi.Y[mask] - sol_lo.Y[mask]))
        rows.append((k, int(ordered), viol_fd, viol_lat, min_gap_fd, min_gap_lat))
        assertions.append(
            Assertion(f"pair_{k}_ordering_sampled", ordered, float(ordered), 1.0)
        )
        assertions.append(
            Assertion(f"pair_{k}_violations", viol_fd + viol_lat == 0, viol_fd + viol_lat, 0)
        )
    return ExperimentReport(
        experiment="comparison_suite",
        config_hash=config_hash(config or {"pairs": len(rows), "nx": grid.nx, "nt": grid.nt}),
        assertions=tuple(assertions),
        header=("pair", "ordering_sampled", "fd_violations", "lattice_violations",
                "fd_min_gap", "lattice_min_gap"),
        rows=tuple(rows),
    )


# ---------------------------------------------------------------------------
# Cross-route agreement
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MCConfig:
    n_paths: int
    nt: int
    seed: int


def _generators_vanish(problem: Problem, density: int = 5) -> bool:
    ts = np.linspace(0.0, problem.T, density)
    xs = np.linspace(problem.x_lo, problem.x_hi, density)
    ys = np.linspace(-3.0, 3.0, density)
    zs = np.linspace(-3.0, 3.0, density)
    tg, xg, yg, zg = np.meshgrid(ts, xs, ys, zs, indexing="ij")
    for name in ("f", "g"):
        vals = vm.eval_vector(problem.program(name), t=tg, x=xg, y=yg, z=zg)
        if np.any(np.asarray(vals) != 0.0):
            return False
    return True


def run_feynman_kac_crosscheck(
    problem: Problem,
    grid: pdesolve.Grid,
    scenarios,
    mc: MCConfig,
    fd_lattice_tol: float = 5e-3,
    config=None,
) -> ExperimentReport:
    """Compare the finite-difference value at (0, x0), the lattice root
    value, and (for vanishing generators) the scenario-sup Monte Carlo
    lower bound with its slack."""
    fd = pdesolve.solve_terminal(problem, grid)
    fd_value = fd.value_at_origin(problem.x0)
    lat = latticebsde.build_lattice(problem, grid.nt, grid.nx)
    sol = latticebsde.solve_penalized(lat, problem, 0.0)
    lat_value = sol.root_value()
    gap = abs(fd_value - lat_value)

    rows = [("fd_value", fd_value), ("lattice_root", lat_value), ("fd_lattice_gap", gap)]
    assertions = [
        Assertion("fd_lattice_gap", gap < fd_lattice_tol, gap, fd_lattice_tol),
    ]
    scenarios = list(scenarios)
    if scenarios and _generators_vanish(problem):
        est = gsim.estimate_upper_expectation(
            problem.phi, problem, scenarios, mc.n_paths, mc.nt, mc.seed
        )
        slack = fd_value + 3.0 * est.se + 1e-2 - est.estimate
        rows += [
            ("mc_estimate", est.estimate),
            ("mc_se", est.se),
            ("mc_argmax_scenario", scenarios[est.argmax_index].describe()),
            ("mc_slack", slack),
        ]
        assertions.append(Assertion("mc_lower_bound", slack >= 0.0, est.estimate,
                                    fd_value + 3.0 * est.se + 1e-2))
    return ExperimentReport(
        experiment="feynman_kac_crosscheck",
        config_hash=config_hash(config or {"nx": grid.nx, "nt": grid.nt, "mc": asdict(mc)}),
        assertions=tuple(assertions),
        header=("quantity", "value"),
        rows=tuple(rows),
    )


# ---------------------------------------------------------------------------
# Stability in the terminal condition
# ---------------------------------------------------------------------------


def run_stability(problem: Problem, delta: float, grid: pdesolve.Grid, config=None) -> ExperimentReport:
    """Perturb the terminal condition by +delta and +delta/2 and report
    the ratio of sup-norm solution gaps; first-order scaling puts it in
    [1.5, 2.5], exactly 2 for generators independent of y."""
    if delta < 0:
        raise Error("delta must be nonnegative")

    def solve(p):
        if p.has_obstacle:
            return pdesolve.solve_obstacle_projection(p, grid)
        return pdesolve.solve_terminal(p, grid)

    base = solve(problem)
    rows = []
    assertions = []
    if delta == 0:
        gap = float(np.max(np.abs(solve(problem).values - base.values)))
        rows.append(("gap_zero_delta", gap))
        assertions.append(Assertion("zero_delta_gap", gap == 0.0, gap, 0.0))
    else:
        full = solve(problem.with_shifted({"phi": delta}))
        half = solve(problem.with_shifted({"phi": delta / 2.0}))
        gap_full = float(np.max(np.abs(full.values - base.values)))
        gap_half = float(np.max(np.abs(half.values - base.values)))
        ratio = gap_full / gap_half if gap_half > 0 else float("inf")
        rows += [("gap_delta", gap_full), ("gap_half_delta", gap_half), ("ratio", ratio)]
        assertions.append(Assertion("first_order_ratio", 1.5 <= ratio <= 2.5, ratio, 2.5))
    return ExperimentReport(
        experiment="stability",
        config_hash=config_hash(config or {"delta": delta, "nx": grid.nx, "nt": grid.nt}),
        assertions=tuple(assertions),
        header=("quantity", "value"),
        rows=tuple(rows),
    )


__all__ = [
    "Assertion",
    "ExperimentReport",
    "MCConfig",
    "config_hash",
    "run_comparison_suite",
    "run_feynman_kac_crosscheck",
    "run_penalty_sweep",
    "run_stability",
]
