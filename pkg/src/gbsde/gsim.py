"""Scenario Monte Carlo for the forward state under the volatility band.

A scenario is a piecewise-constant volatility level inside the band;
each scenario induces a classical measure, so the max of per-scenario
Monte Carlo means is a statistical LOWER bound on the band-sup
expectation, never the value itself.  Gaussian increments come from a
counter-based generator through the inverse CDF, so path blocks are
reproducible independent of scheduling.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels, _rng, vm
from .coeffexpr import Expr, Problem, compile_expr, free_variables
from .errors import DivergenceError, Error, ScenarioError
from .pdesolve import Field

_EXP_CAP = 700.0  # exp overflows past this


@dataclass(frozen=True)
class Scenario:
    """Piecewise-constant volatility control.

    ``breakpoints`` are segment start times (first must be 0, strictly
    increasing); ``levels`` the volatility on each segment.
    """

    breakpoints: tuple
    levels: tuple

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        lv = tuple(float(v) for v in self.levels)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "levels", lv)
        if len(bp) != len(lv) or not bp:
            raise ScenarioError("need one level per breakpoint")
        if bp[0] != 0.0 or any(b2 <= b1 for b1, b2 in zip(bp, bp[1:])):
            raise ScenarioError("breakpoints must start at 0 and increase strictly")

    @classmethod
    def constant(cls, level: float) -> "Scenario":
        return cls((0.0,), (float(level),))

    def validate_band(self, problem: Problem) -> "Scenario":
        lo, hi = problem.coeffs.sigma_low, problem.coeffs.sigma_high
        if any(not (lo - 1e-12 <= v <= hi + 1e-12) for v in self.levels):
            raise ScenarioError(f"scenario levels {self.levels} leave the band [{lo}, {hi}]")
        return self

    def levels_for(self, ts: np.ndarray, T: float) -> np.ndarray:
        if self.breakpoints[-1] >= T:
            raise ScenarioError("last breakpoint must lie before the horizon")
        idx = np.searchsorted(self.breakpoints, ts, side="right") - 1
        return np.asarray(self.levels, dtype=float)[np.clip(idx, 0, len(self.levels) - 1)]

    def describe(self) -> str:
        if len(self.levels) == 1:
            return f"{self.levels[0]:g}"
        return ",".join(f"{b:g}={v:g}" for b, v in zip(self.breakpoints, self.levels))


@dataclass(frozen=True)
class PathBundle:
    """Simulated driving noise B, its quadratic variation, and the
    forward state X; arrays are (n_paths, nt + 1)."""

    B: np.ndarray
    QV: np.ndarray
    X: np.ndarray
    dt: float
    seed: int

    def write_csv(self, path) -> None:
        """Rows ``path,step,t,B,QV,X`` at 17 significant digits."""
        n_paths, cols = self.B.shape
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("path,step,t,B,QV,X\n")
            for p in range(n_paths):
                for i in range(cols):
                    t = i * self.dt
                    fh.write(
                        f"{p},{i},{t:.17g},{self.B[p, i]:.17g},"
                        f"{self.QV[p, i]:.17g},{self.X[p, i]:.17g}\n"
                    )


def _scenario_levels(problem: Problem, scenario: Scenario, nt: int) -> np.ndarray:
    scenario.validate_band(problem)
    ts = np.arange(nt) * (problem.T / nt)
    return np.ascontiguousarray(scenario.levels_for(ts, problem.T))


def _block_normals(seed, block, count, nt):
    return _rng.block_normals(seed, block, count * nt).reshape(count, nt)


def _simulate_block(problem, vlev, dt, nt, seed, block, count, normals=None):
    if normals is None:
        normals = _block_normals(seed, block, count, nt)
    return _kernels.euler_paths(problem.program_pack(), problem.x0, 0.0, dt, nt, vlev, normals)


def sample_paths(
    problem: Problem, scenario: Scenario, n_paths: int, nt: int, seed: int
) -> PathBundle:
    """Euler scheme from x0 under the scenario: dB ~ N(0, v^2 dt),
    dQV = v^2 dt, dX = b dt + h dQV + sigma dB.  Deterministic in seed."""
    if n_paths < 1 or nt < 1:
        raise Error("n_paths and nt must be >= 1")
    vlev = _scenario_levels(problem, scenario, nt)
    dt = problem.T / nt
    B = np.empty((n_paths, nt + 1))
    QV = np.empty((n_paths, nt + 1))
    X = np.empty((n_paths, nt + 1))
    for block, start, count in _rng.iter_blocks(n_paths):
        b, q, x = _simulate_block(problem, vlev, dt, nt, seed, block, count)
        B[start : start + count] = b
        QV[start : start + count] = q
        X[start : start + count] = x
    if not np.all(np.isfinite(X)):
        raise DivergenceError("forward simulation produced non-finite states")
    lo2dt = problem.coeffs.lo2 * dt
    hi2dt = problem.coeffs.hi2 * dt
    dq = np.diff(QV, axis=1)
    if np.any(dq < lo2dt - 1e-15) or np.any(dq > hi2dt + 1e-15):
        raise ScenarioError("quadratic-variation increments left the band")
    return PathBundle(B=B, QV=QV, X=X, dt=dt, seed=seed)


@dataclass(frozen=True)
class UpperExpectationEstimate:
    """Scenario-family lower bound for the band-sup expectation."""

    estimate: float
    se: float
    argmax_index: int
    scenario_means: tuple
    scenario_ses: tuple

    @property
    def is_lower_bound(self) -> bool:
        """Estimates over a finite scenario family never exceed the sup."""
        return True


def estimate_upper_expectation(
    payoff: Expr,
    problem: Problem,
    scenarios,
    n_paths: int,
    nt: int,
    seed: int,
) -> UpperExpectationEstimate:
    """Max over scenarios of the Monte Carlo mean of payoff(X_T).

    All scenarios share the same driving normals (common random
    numbers), so the argmax is stable under the seed.
    """
    scenarios = list(scenarios)
    if not scenarios:
        raise Error("need at least one scenario")
    if n_paths < 2:
        raise Error("n_paths must be >= 2")
    extra = free_variables(payoff) - {"x"}
    if extra:
        raise Error(f"payoff may only use x, found {sorted(extra)}")
    prog_payoff = compile_expr(payoff)
    dt = problem.T / nt
    sums = np.zeros(len(scenarios))
    sums_sq = np.zeros(len(scenarios))
    vlevs = [_scenario_levels(problem, s, nt) for s in scenarios]
    for block, _, count in _rng.iter_blocks(n_paths):
        normals = _block_normals(seed, block, count, nt)
        for k, vlev in enumerate(vlevs):
            _, _, X = _simulate_block(problem, vlev, dt, nt, seed, block, count, normals)
            vals = np.asarray(vm.eval_vector(prog_payoff, x=X[:, -1]), dtype=float)
            if not np.all(np.isfinite(vals)):
                raise DivergenceError("payoff evaluation produced non-finite values")
            sums[k] += float(np.sum(vals))
            sums_sq[k] += float(np.sum(vals * vals))
    means = sums / n_paths
    variances = np.maximum(sums_sq / n_paths - means**2, 0.0) * n_paths / (n_paths - 1)
    ses = np.sqrt(variances / n_paths)
    k = int(np.argmax(means))
    return UpperExpectationEstimate(
        estimate=float(means[k]),
        se=float(ses[k]),
        argmax_index=k,
        scenario_means=tuple(float(v) for v in means),
        scenario_ses=tuple(float(v) for v in ses),
    )


@dataclass(frozen=True)
class MartingaleCheck:
    mean: float
    se: float
    n_paths: int


def exp_martingale_check(
    z_field: Field,
    problem: Problem,
    scenario: Scenario,
    n_paths: int,
    nt: int,
    seed: int,
) -> MartingaleCheck:
    """Monte Carlo mean of the stochastic exponential

        exp( sum Z dB - 1/2 sum Z^2 dQV )

    with Z read from ``z_field`` along the simulated paths.  Under any
    fixed in-band scenario this is a true martingale started at 1, so
    the mean must sit within statistical error of 1.
    """
    if n_paths < 2:
        raise Error("n_paths must be >= 2")
    vlev = _scenario_levels(problem, scenario, nt)
    dt = problem.T / nt
    total = 0.0
    total_sq = 0.0
    max_exponent = -math.inf
    for block, _, count in _rng.iter_blocks(n_paths):
        B, QV, X = _simulate_block(problem, vlev, dt, nt, seed, block, count)
        expo = np.zeros(count)
        for i in range(nt):
            zi = z_field.at(i * dt, X[:, i])
            expo += zi * (B[:, i + 1] - B[:, i]) - 0.5 * zi * zi * (QV[:, i + 1] - QV[:, i])
        max_exponent = max(max_exponent, float(np.max(expo)))
        if max_exponent > _EXP_CAP:
            raise DivergenceError(
                f"stochastic exponential overflowed (max exponent {max_exponent:.6g})"
            )
        vals = np.exp(expo)
        total += float(np.sum(vals))
        total_sq += float(np.sum(vals * vals))
    mean = total / n_paths
    var = max(total_sq / n_paths - mean * mean, 0.0) * n_paths / (n_paths - 1)
    return MartingaleCheck(mean=mean, se=math.sqrt(var / n_paths), n_paths=n_paths)


def bmo_estimate(
    z_field: Field,
    problem: Problem,
    scenarios,
    n_paths: int,
    nt: int,
    seed: int,
) -> float:
    """Heuristic diagnostic for the remaining quadratic energy of Z.

    Maximises, over the scenario family and over deterministic grid
    times tau, the Monte Carlo mean of the tail integral of Z^2 against
    realised quadratic variation.  Deterministic times only, so this is
    a lower bound on the stopping-time supremum; heuristic by design.
    """
    scenarios = list(scenarios)
    if not scenarios:
        raise Error("need at least one scenario")
    dt = problem.T / nt
    best = -math.inf
    for scen in scenarios:
        vlev = _scenario_levels(problem, scen, nt)
        incr_sums = np.zeros(nt)
        for block, _, count in _rng.iter_blocks(n_paths):
            B, QV, X = _simulate_block(problem, vlev, dt, nt, seed, block, count)
            for i in range(nt):
                zi = z_field.at(i * dt, X[:, i])
                incr_sums[i] += float(np.sum(zi * zi * (QV[:, i + 1] - QV[:, i])))
        mean_incr = incr_sums / n_paths
        # tail means over all deterministic start times at once
        tails = np.concatenate([np.cumsum(mean_incr[::-1])[::-1], [0.0]])
        best = max(best, float(np.max(tails)))
    return best


__all__ = [
    "MartingaleCheck",
    "PathBundle",
    "Scenario",
    "UpperExpectationEstimate",
    "bmo_estimate",
    "estimate_upper_expectation",
    "exp_martingale_check",
    "sample_paths",
]
