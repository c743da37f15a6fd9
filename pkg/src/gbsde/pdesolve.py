"""Monotone explicit finite-difference solver for the worst-case
volatility terminal-value PDE and its lower-obstacle variant.

The backward march uses a central second difference, sign-upwinded
first differences for the drift terms, and the closed positive/negative
part form of the band generator, so no inner optimisation over the
volatility control is ever needed.  The obstacle is handled either by
per-layer projection onto the constraint or by an explicit penalty term
n (u - l)^- added to the nonlinearity.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels, vm
from .coeffexpr import Problem
from .errors import DivergenceError, Error, StabilityError
from .gcalc import g_eval

CFL_SAFETY = 0.9


@dataclass(frozen=True)
class Grid:
    """Uniform space-time grid.

    ``nx`` counts interior nodes; the node array includes the two
    boundary nodes, so there are nx + 2 space nodes and nt + 1 time
    layers.
    """

    x_lo: float
    x_hi: float
    nx: int
    nt: int

    def __post_init__(self):
        if self.nx < 3 or self.nt < 1:
            raise StabilityError(f"grid needs nx >= 3 and nt >= 1, got ({self.nx}, {self.nt})")
        if not self.x_lo < self.x_hi:
            raise StabilityError("grid needs x_lo < x_hi")

    @property
    def dx(self) -> float:
        return (self.x_hi - self.x_lo) / (self.nx + 1)

    def xs(self) -> np.ndarray:
        return np.linspace(self.x_lo, self.x_hi, self.nx + 2)

    def ts(self, T: float) -> np.ndarray:
        return np.linspace(0.0, T, self.nt + 1)

    def dt(self, T: float) -> float:
        return T / self.nt


def sup_sigma_sq(problem: Problem, grid: Grid, t_samples: int = 17) -> float:
    """Largest sampled sigma(t,x)^2 over the grid; used in the CFL bound."""
    ts = np.linspace(0.0, problem.T, t_samples)
    xs = grid.xs()
    tg, xg = np.meshgrid(ts, xs, indexing="ij")
    vals = vm.eval_vector(problem.program("sigma"), t=tg, x=xg) ** 2
    out = float(np.max(vals))
    if not math.isfinite(out):
        raise DivergenceError("sigma(t,x) is not finite on the grid")
    return out


def check_cfl(problem: Problem, grid: Grid, cfl_safety: float = CFL_SAFETY) -> None:
    if not 0.0 < cfl_safety <= 0.9:
        raise StabilityError("cfl_safety must lie in (0, 0.9]")
    dt = grid.dt(problem.T)
    bound = cfl_safety * grid.dx**2 / (problem.coeffs.hi2 * sup_sigma_sq(problem, grid))
    if dt > bound:
        raise StabilityError(
            f"explicit-scheme stability violated: dt = {dt:.6g} exceeds "
            f"{bound:.6g} = cfl_safety*dx^2/(sigma_high^2*sup sigma^2); "
            f"raise nt above {math.ceil(problem.T / bound)} or coarsen dx"
        )


def build_grid(problem: Problem, nx: int, nt: int, cfl_safety: float = CFL_SAFETY) -> Grid:
    """Grid over the problem's truncation box; raises if the explicit
    scheme's diffusion stability bound fails."""
    grid = Grid(problem.x_lo, problem.x_hi, nx, nt)
    check_cfl(problem, grid, cfl_safety)
    return grid


@dataclass(frozen=True)
class Field:
    """Solution values u(t_i, x_j); shape (nt + 1, nx + 2), all finite."""

    grid: Grid
    T: float
    values: np.ndarray

    @classmethod
    def constant(cls, grid: Grid, T: float, value: float) -> "Field":
        return cls(grid, T, np.full((grid.nt + 1, grid.nx + 2), float(value)))

    def at(self, t: float, x) -> np.ndarray:
        """Sample the field: previous-layer in t, linear interpolation in x."""
        i = min(int(np.floor(t / self.T * self.grid.nt + 1e-12)), self.grid.nt)
        return np.interp(np.asarray(x, dtype=float), self.grid.xs(), self.values[i])

    def value_at_origin(self, x: float) -> float:
        """u(0, x) by quadratic interpolation on the nearest stencil
        (second-order accurate; exact for locally quadratic fields)."""
        xs = self.grid.xs()
        u = self.values[0]
        j = int(np.clip(np.argmin(np.abs(xs - x)), 1, xs.size - 2))
        x0, x1, x2 = xs[j - 1 : j + 2]
        u0, u1, u2 = u[j - 1 : j + 2]
        return float(
            u0 * (x - x1) * (x - x2) / ((x0 - x1) * (x0 - x2))
            + u1 * (x - x0) * (x - x2) / ((x1 - x0) * (x1 - x2))
            + u2 * (x - x0) * (x - x1) / ((x2 - x0) * (x2 - x1))
        )

    def write_csv(self, path) -> None:
        """Rows ``t,x,u`` in time-outer order at 17 significant digits."""
        xs = self.grid.xs()
        ts = self.grid.ts(self.T)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("t,x,u\n")
            for i in range(ts.size):
                t = ts[i]
                row = self.values[i]
                for j in range(xs.size):
                    fh.write(f"{t:.17g},{xs[j]:.17g},{row[j]:.17g}\n")


def hamiltonian(problem: Problem, t: float, x: float, u: float, du: float, d2u: float) -> float:
    """Pointwise value of the PDE nonlinearity

        F = G(sigma^2 d2u + 2 f(t,x,u,sigma*du) + 2 h du) + b du + g(t,x,u,sigma*du).
    """
    for name, v in (("t", t), ("x", x), ("u", u), ("du", du), ("d2u", d2u)):
        if not math.isfinite(v):
            raise Error(f"hamiltonian requires finite {name}, got {v!r}")
    ev = vm.eval_scalar
    sg = ev(problem.program("sigma"), t=t, x=x)
    bv = ev(problem.program("b"), t=t, x=x)
    hv = ev(problem.program("h"), t=t, x=x)
    z = sg * du
    fv = ev(problem.program("f"), t=t, x=x, y=u, z=z)
    gv = ev(problem.program("g"), t=t, x=x, y=u, z=z)
    vals = (sg, bv, hv, fv, gv)
    if not all(math.isfinite(v) for v in vals):
        raise DivergenceError(f"coefficient evaluation failed at (t={t}, x={x})")
    return g_eval(problem.coeffs, sg * sg * d2u + 2.0 * fv + 2.0 * hv * du) + bv * du + gv


def _march(problem: Problem, grid: Grid, mode: int, penalty_n: float, cfl_safety: float) -> Field:
    check_cfl(problem, grid, cfl_safety)
    if mode in (_kernels.MODE_PROJECTION, _kernels.MODE_PENALTY) and not problem.has_obstacle:
        raise Error("obstacle solve requested but the problem has no obstacle")
    xs = grid.xs()
    dt = grid.dt(problem.T)
    # The explicit penalty is a stiff reaction term: cap the step so that
    # dt_sub * n <= cfl_safety by sub-stepping inside each macro layer.
    nsub = 1
    if mode == _kernels.MODE_PENALTY and penalty_n > 0:
        nsub = max(1, math.ceil(dt * penalty_n / cfl_safety))
    u_out = np.empty((grid.nt + 1, xs.size))
    u_out[grid.nt] = vm.eval_vector(problem.program("phi"), x=xs)
    if not np.all(np.isfinite(u_out[grid.nt])):
        raise DivergenceError("terminal payoff not finite on the grid", layer=grid.nt)
    status = _kernels.pde_march(
        problem.program_pack(), xs, 0.0, dt, grid.nt, nsub,
        problem.coeffs.lo2, problem.coeffs.hi2, mode, float(penalty_n), u_out,
    )
    if status >= 0:
        raise DivergenceError(
            f"finite-difference march diverged at backward layer {status}", layer=int(status)
        )
    return Field(grid, problem.T, u_out)


def solve_terminal(problem: Problem, grid: Grid, cfl_safety: float = CFL_SAFETY) -> Field:
    """Backward march of the terminal-value problem (no obstacle)."""
    return _march(problem, grid, _kernels.MODE_TERMINAL, 0.0, cfl_safety)


def solve_obstacle_projection(problem: Problem, grid: Grid, cfl_safety: float = CFL_SAFETY) -> Field:
    """Terminal march with per-layer projection u := max(u, l)."""
    return _march(problem, grid, _kernels.MODE_PROJECTION, 0.0, cfl_safety)


def solve_obstacle_penalized(
    problem: Problem, grid: Grid, n: float, cfl_safety: float = CFL_SAFETY
) -> Field:
    """Terminal march with the explicit penalty term n (u - l)^-."""
    if n < 0:
        raise Error("penalty level must be nonnegative")
    if n == 0:
        return _march(problem, grid, _kernels.MODE_TERMINAL, 0.0, cfl_safety)
    return _march(problem, grid, _kernels.MODE_PENALTY, float(n), cfl_safety)


def gradient_field(problem: Problem, field: Field) -> Field:
    """sigma(t,x) * D_x u with the same stencil the march feeds to the
    generators (central interior, one-sided at the edges)."""
    xs = field.grid.xs()
    ts = field.grid.ts(field.T)
    dx = field.grid.dx
    u = field.values
    dc = np.empty_like(u)
    dc[:, 1:-1] = (u[:, 2:] - u[:, :-2]) / (2.0 * dx)
    dc[:, 0] = (u[:, 1] - u[:, 0]) / dx
    dc[:, -1] = (u[:, -1] - u[:, -2]) / dx
    tg = ts[:, None]
    sg = np.broadcast_to(vm.eval_vector(problem.program("sigma"), t=tg, x=xs[None, :]), u.shape)
    return Field(field.grid, field.T, sg * dc)


__all__ = [
    "CFL_SAFETY",
    "Field",
    "Grid",
    "build_grid",
    "check_cfl",
    "gradient_field",
    "hamiltonian",
    "solve_obstacle_penalized",
    "solve_obstacle_projection",
    "solve_terminal",
    "sup_sigma_sq",
]
