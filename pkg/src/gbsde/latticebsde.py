"""Dynamic-programming trinomial lattice for the penalized backward
equation under the volatility band.

The forward chain is a recombining trinomial on levels x0 + j*dx whose
one-step conditional mean (b + h v^2) dt and variance sigma^2 v^2 dt are
matched exactly per node for both band-edge controls v.  The backward
recursion maximises over the two endpoint variance levels (the one-step
objective is affine in v^2, so endpoints suffice), adds the generator
weighted by realised quadratic variation, and adds the explicit penalty
n (Y - l)^- when an obstacle is present.  Level growth is capped at the
truncation box; at the cap the value lookup linearly extrapolates, the
same boundary rule as the finite-difference march.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels, _rng, vm
from .coeffexpr import Problem
from .errors import DivergenceError, Error, ScenarioError, StabilityError
from .pdesolve import Field, Grid

PENALTY_STEP_CAP = 0.9


@dataclass(frozen=True)
class Lattice:
    """Recombining trinomial chain geometry.

    Layer i (0..nt) carries levels j in [-min(i, J), min(i, J)] at
    positions x0 + j*dx; arrays over the lattice are rectangular with
    width 2J + 1 and NaN padding outside the valid wedge.
    """

    nt: int
    dt: float
    dx: float
    x0: float
    J: int
    T: float

    @property
    def width(self) -> int:
        return 2 * self.J + 1

    def half_width(self, layer: int) -> int:
        return min(layer, self.J)

    def levels(self, layer: int) -> np.ndarray:
        j = self.half_width(layer)
        return np.arange(-j, j + 1)

    def x_of(self, levels) -> np.ndarray:
        return self.x0 + np.asarray(levels) * self.dx

    def valid_mask(self) -> np.ndarray:
        mask = np.zeros((self.nt + 1, self.width), dtype=bool)
        for i in range(self.nt + 1):
            j = self.half_width(i)
            mask[i, self.J - j : self.J + j + 1] = True
        return mask


def transition_moments(lat: Lattice, problem: Problem, layer: int, v2: float):
    """Conditional mean and variance of the chain increment at every
    valid node of ``layer`` under squared control ``v2``, together with
    the (up, mid, down) probabilities."""
    xs = lat.x_of(lat.levels(layer))
    t = layer * lat.dt
    bv = np.broadcast_to(vm.eval_vector(problem.program("b"), t=t, x=xs), xs.shape)
    hv = np.broadcast_to(vm.eval_vector(problem.program("h"), t=t, x=xs), xs.shape)
    sg = np.broadcast_to(vm.eval_vector(problem.program("sigma"), t=t, x=xs), xs.shape)
    m1 = (bv + hv * v2) * lat.dt
    s2 = sg * sg * v2 * lat.dt
    ratio = (s2 + m1 * m1) / (lat.dx * lat.dx)
    pu = 0.5 * (ratio + m1 / lat.dx)
    pd = 0.5 * (ratio - m1 / lat.dx)
    pm = 1.0 - ratio
    mean = (pu - pd) * lat.dx
    var = (pu + pd) * lat.dx * lat.dx - mean * mean
    return mean, var, (pu, pm, pd)


def build_lattice(problem: Problem, nt: int, nx: int, x0: float | None = None) -> Lattice:
    """Chain aligned with a Grid of ``nx`` interior nodes over the
    problem box: dx = (x_hi - x_lo)/(nx + 1), level growth capped at the
    box.  Raises if any transition probability leaves [0, 1], naming the
    worst node."""
    if nt < 1 or nx < 3:
        raise StabilityError(f"lattice needs nt >= 1 and nx >= 3, got ({nt}, {nx})")
    dx = (problem.x_hi - problem.x_lo) / (nx + 1)
    x0 = problem.x0 if x0 is None else float(x0)
    if not problem.x_lo <= x0 <= problem.x_hi:
        raise Error("lattice root must lie inside the problem box")
    dt = problem.T / nt
    J = min(
        nt,
        int(math.floor((problem.x_hi - x0) / dx + 1e-12)),
        int(math.floor((x0 - problem.x_lo) / dx + 1e-12)),
    )
    if J < 2:
        raise StabilityError(
            "lattice too narrow: fewer than 2 levels fit between the root and the box; "
            "increase nx or widen the domain"
        )
    lat = Lattice(nt=nt, dt=dt, dx=dx, x0=x0, J=J, T=problem.T)

    worst = (0.0, 0, 0, x0, "mid")  # (violation, layer, level, x, which)
    for i in range(nt):
        for v2 in (problem.coeffs.lo2, problem.coeffs.hi2):
            _, _, (pu, pm, pd) = transition_moments(lat, problem, i, v2)
            for name, arr in (("up", pu), ("mid", pm), ("down", pd)):
                viol = np.maximum(-arr, arr - 1.0)
                k = int(np.argmax(viol))
                if float(viol[k]) > worst[0]:
                    lev = int(lat.levels(i)[k])
                    worst = (float(viol[k]), i, lev, float(lat.x_of(lev)), name)
    if worst[0] > 1e-12:
        _, layer, lev, xw, name = worst
        raise StabilityError(
            f"infeasible trinomial probabilities: {name} probability leaves [0,1] at "
            f"layer {layer}, level {lev} (x = {xw:.6g}); decrease nt or coarsen nx "
            f"(need sigma_high^2 * sigma(t,x)^2 * dt <= dx^2)"
        )
    return lat


@dataclass(frozen=True)
class LatticeSolution:
    """Backward-recursion output on the lattice rectangle.

    Y, Z: value and gradient proxy per node; dL: penalty increment
    added at the node (nonnegative); dK: optimality slack of the
    non-chosen control (nonpositive, diagnostics only); chosen_v2: the
    maximising variance level.  Rows 0..nt-1 carry recursion output;
    the terminal row carries Y = phi(x) only.
    """

    lattice: Lattice
    penalty_n: float
    Y: np.ndarray
    Z: np.ndarray
    dL: np.ndarray
    dK: np.ndarray
    chosen_v2: np.ndarray

    def root_value(self) -> float:
        return float(self.Y[0, self.lattice.J])

    def root_z(self) -> float:
        return float(self.Z[0, self.lattice.J])

    def write_csv(self, path) -> None:
        """Rows ``layer,node,x,Y,Z,dL,chosen_v2`` over valid nodes."""
        lat = self.lattice
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("layer,node,x,Y,Z,dL,chosen_v2\n")
            for i in range(lat.nt + 1):
                for lev in lat.levels(i):
                    k = lat.J + lev
                    fh.write(
                        f"{i},{lev},{lat.x_of(lev):.17g},{self.Y[i, k]:.17g},"
                        f"{self.Z[i, k]:.17g},{self.dL[i, k]:.17g},{self.chosen_v2[i, k]:.17g}\n"
                    )


def solve_penalized(
    lat: Lattice, problem: Problem, n: float, debug_check_midpoint: bool = False
) -> LatticeSolution:
    """Backward recursion for the penalized equation at level ``n``.

    Without an obstacle the penalty vanishes and this solves the
    unreflected equation.  The explicit penalty requires dt * n <= 0.9.
    """
    if n < 0:
        raise Error("penalty level must be nonnegative")
    has_l = problem.has_obstacle
    pen_n = float(n) if has_l else 0.0
    if pen_n * lat.dt > PENALTY_STEP_CAP + 1e-12:
        need = math.ceil(problem.T * pen_n / PENALTY_STEP_CAP)
        raise StabilityError(
            f"explicit penalty needs dt*n <= {PENALTY_STEP_CAP}; raise nt to >= {need}"
        )
    W = lat.width
    shape = (lat.nt + 1, W)
    Y = np.full(shape, np.nan)
    Z = np.full(shape, np.nan)
    dL = np.full(shape, np.nan)
    dK = np.full(shape, np.nan)
    CH = np.full(shape, np.nan)
    jT = lat.half_width(lat.nt)
    xs_T = lat.x_of(lat.levels(lat.nt))
    Y[lat.nt, lat.J - jT : lat.J + jT + 1] = vm.eval_vector(problem.program("phi"), x=xs_T)
    if not np.all(np.isfinite(Y[lat.nt, lat.J - jT : lat.J + jT + 1])):
        raise DivergenceError("terminal payoff not finite on the lattice", layer=lat.nt)
    status = _kernels.lattice_backward(
        problem.program_pack(), lat.J, lat.x0, lat.dx, lat.dt, lat.nt,
        problem.coeffs.lo2, problem.coeffs.hi2, has_l, pen_n, Y, Z, dL, dK, CH,
    )
    if status >= 0:
        raise DivergenceError(
            f"lattice recursion diverged at backward layer {status}", layer=int(status)
        )
    sol = LatticeSolution(lat, pen_n, Y, Z, dL, dK, CH)
    if debug_check_midpoint:
        _assert_midpoint_never_beats_endpoints(lat, problem, sol, pen_n)
    return sol


def _assert_midpoint_never_beats_endpoints(lat, problem, sol, pen_n, rtol=1e-9):
    """Debug check: the band-midpoint control never beats the chosen
    endpoint (the one-step objective is affine in v^2)."""
    v2m = 0.5 * (problem.coeffs.lo2 + problem.coeffs.hi2)
    for i in range(min(lat.nt, 64)):
        j0 = lat.half_width(i)
        j1 = lat.half_width(i + 1)
        lev = lat.levels(i)
        xs = lat.x_of(lev)
        t = i * lat.dt
        c = sol.Y[i + 1, lat.J + lev]
        up = np.where(lev + 1 <= j1, sol.Y[i + 1, np.minimum(lat.J + lev + 1, 2 * lat.J)],
                      2.0 * c - sol.Y[i + 1, lat.J + lev - 1])
        dn = np.where(lev - 1 >= -j1, sol.Y[i + 1, np.maximum(lat.J + lev - 1, 0)],
                      2.0 * c - sol.Y[i + 1, np.minimum(lat.J + lev + 1, 2 * lat.J)])
        sh = xs.shape
        ev = lambda slot, **kw: np.broadcast_to(
            vm.eval_vector(problem.program(slot), t=t, x=xs, **kw), sh
        )
        bv, hv, sg = ev("b"), ev("h"), ev("sigma")
        zz = sg * (up - dn) / (2.0 * lat.dx)
        m1 = (bv + hv * v2m) * lat.dt
        ratio = (sg * sg * v2m * lat.dt + m1 * m1) / (lat.dx * lat.dx)
        ey = 0.5 * (ratio + m1 / lat.dx) * up + (1.0 - ratio) * c + 0.5 * (ratio - m1 / lat.dx) * dn
        gen = ev("g", y=ey, z=zz) + v2m * ev("f", y=ey, z=zz)
        if problem.has_obstacle:
            gen = gen + pen_n * np.maximum(ev("obstacle") - ey, 0.0)
        q_mid = ey + lat.dt * gen
        chosen = sol.Y[i, lat.J + lev]
        if np.any(q_mid > chosen + rtol * (1.0 + np.abs(chosen))):
            raise AssertionError(f"midpoint control beat both endpoints at layer {i}")


class FeedbackScenario:
    """Path-dependent control that replays the maximising variance level
    recorded by a lattice solve."""

    def __init__(self, solution: LatticeSolution):
        self.solution = solution

    def control_matrix(self, lat: Lattice, problem: Problem) -> np.ndarray:
        if self.solution.lattice != lat:
            raise ScenarioError("feedback scenario built on a different lattice")
        ch = self.solution.chosen_v2
        v = np.sqrt(np.where(np.isfinite(ch), ch, problem.coeffs.lo2))
        return v[: lat.nt]


def _control_matrix(scenario, lat: Lattice, problem: Problem) -> np.ndarray:
    """(nt, width) control levels; time scenarios broadcast across nodes."""
    if isinstance(scenario, FeedbackScenario):
        return scenario.control_matrix(lat, problem)
    ts = np.arange(lat.nt) * lat.dt
    levels = np.asarray(scenario.levels_for(ts, lat.T), dtype=float)
    lo, hi = problem.coeffs.sigma_low, problem.coeffs.sigma_high
    if np.any(levels < lo - 1e-12) or np.any(levels > hi + 1e-12):
        raise ScenarioError(
            f"scenario leaves the band [{lo}, {hi}]: range "
            f"[{levels.min():.6g}, {levels.max():.6g}]"
        )
    return np.repeat(levels[:, None], lat.width, axis=1)


@dataclass(frozen=True)
class MartingaleReport:
    """Monte Carlo summary of the per-path cumulative backward residual.

    The residual accumulates Y_{i+1} - Y_i + dt*(g + v^2 f + penalty)
    - Z dB along simulated chain paths; its mean is the mean total
    increment of the undeclared monotone part, which is <= 0 under any
    in-band control and ~ 0 under the maximising one.
    """

    mean: float
    se: float
    n_paths: int


def reprice_under_scenario(
    sol: LatticeSolution,
    lat: Lattice,
    problem: Problem,
    scenario,
    n_paths: int,
    seed: int,
) -> MartingaleReport:
    if n_paths < 2:
        raise Error("n_paths must be >= 2")
    V = np.ascontiguousarray(_control_matrix(scenario, lat, problem))
    total = 0.0
    total_sq = 0.0
    for block, _, count in _rng.iter_blocks(n_paths):
        U = _rng.block_uniforms(seed, block, count * lat.nt).reshape(count, lat.nt)
        res = _kernels.chain_residuals(
            problem.program_pack(), lat.J, lat.x0, lat.dx, lat.dt, lat.nt,
            problem.coeffs.lo2, problem.coeffs.hi2, problem.has_obstacle,
            sol.penalty_n, sol.Y, sol.Z, V, U,
        )
        if not np.all(np.isfinite(res)):
            raise DivergenceError("chain repricing produced non-finite residuals")
        total += float(np.sum(res))
        total_sq += float(np.sum(res * res))
    mean = total / n_paths
    var = max(total_sq / n_paths - mean * mean, 0.0) * n_paths / (n_paths - 1)
    return MartingaleReport(mean=mean, se=math.sqrt(var / n_paths), n_paths=n_paths)


def z_field(sol: LatticeSolution, lat: Lattice) -> Field:
    """The lattice Z surface as a grid field (edge-padded outside the
    valid wedge), usable by the scenario simulator."""
    grid = Grid(
        x_lo=lat.x0 - (lat.J + 1) * lat.dx,
        x_hi=lat.x0 + (lat.J + 1) * lat.dx,
        nx=lat.width,
        nt=lat.nt,
    )
    vals = np.zeros((lat.nt + 1, lat.width + 2))
    for i in range(lat.nt + 1):
        row = sol.Z[min(i, lat.nt - 1)] if lat.nt > 0 else sol.Z[0]
        j = lat.half_width(min(i, lat.nt - 1))
        inner = row[lat.J - j : lat.J + j + 1]
        vals[i, lat.J - j + 1 : lat.J + j + 2] = inner
        vals[i, : lat.J - j + 1] = inner[0]
        vals[i, lat.J + j + 1 :] = inner[-1]
    return Field(grid, lat.T, vals)


__all__ = [
    "FeedbackScenario",
    "Lattice",
    "LatticeSolution",
    "MartingaleReport",
    "build_lattice",
    "reprice_under_scenario",
    "solve_penalized",
    "transition_moments",
    "z_field",
]
