import numpy as np
import pytest

from gbsde import pdesolve
from gbsde.errors import DivergenceError, Error, StabilityError
from gbsde.gcalc import g_eval
from tests.conftest import make_problem


def small_grid(problem, nx=80, nt=160):
    return pdesolve.build_grid(problem, nx, nt)


# ---------------------------------------------------------------------------
# Hamiltonian
# ---------------------------------------------------------------------------


def test_hamiltonian_reduces_to_generator(gheat_problem):
    p = gheat_problem
    got = pdesolve.hamiltonian(p, 0.3, 0.1, 5.0, 7.0, 2.0)
    assert got == g_eval(p.coeffs, 2.0)


def test_hamiltonian_quadratic_generator_composition():
    p = make_problem(f="0.25*z^2", phi="x", bounds={"L_z": 0.25, "M_0": 13.0, "m": 1})
    # sigma = 1, du = 2: argument is 2 * 0.25 * (1*2)^2 = 2
    got = pdesolve.hamiltonian(p, 0.0, 0.0, 0.0, 2.0, 0.0)
    assert got == pytest.approx(g_eval(p.coeffs, 2.0), rel=1e-14)


def test_hamiltonian_pure_drift():
    p = make_problem(b="1", sigma="1", phi="x", bounds={"M_0": 13.0, "m": 1})
    assert pdesolve.hamiltonian(p, 0.0, 0.0, 0.0, 3.0, 0.0) == pytest.approx(3.0, rel=1e-14)


def test_hamiltonian_rejects_nonfinite(gheat_problem):
    with pytest.raises(Error):
        pdesolve.hamiltonian(gheat_problem, 0.0, np.nan, 0.0, 0.0, 0.0)


# ---------------------------------------------------------------------------
# Grid / CFL
# ---------------------------------------------------------------------------


def test_cfl_enforced_at_construction(gheat_problem):
    with pytest.raises(StabilityError, match="stability"):
        pdesolve.build_grid(gheat_problem, 400, 40)  # dt far above the bound


def test_grid_shape_limits(gheat_problem):
    with pytest.raises(StabilityError):
        pdesolve.Grid(-1.0, 1.0, 2, 10)
    with pytest.raises(StabilityError):
        pdesolve.Grid(1.0, -1.0, 10, 10)


# ---------------------------------------------------------------------------
# Terminal solves
# ---------------------------------------------------------------------------


def test_linear_payoff_preserved_exactly():
    p = make_problem(phi="x", bounds={"M_0": 13.0, "m": 1})
    grid = small_grid(p)
    field = pdesolve.solve_terminal(p, grid)
    expected = np.tile(grid.xs(), (grid.nt + 1, 1))
    # exact up to accumulated roundoff of the central stencil on a linear field
    assert np.max(np.abs(field.values - expected)) < 1e-11


def test_band_heat_upper_and_lower_values(gheat_problem, gheat_lower_problem):
    grid = small_grid(gheat_problem, nx=120, nt=240)
    up = pdesolve.solve_terminal(gheat_problem, grid)
    assert up.value_at_origin(0.0) == pytest.approx(1.0, abs=5e-3)
    dn = pdesolve.solve_terminal(gheat_lower_problem, grid)
    assert dn.value_at_origin(0.0) == pytest.approx(-0.25, abs=2e-3)


def test_discrete_comparison_under_ordered_data(gheat_problem):
    grid = small_grid(gheat_problem)
    base = pdesolve.solve_terminal(gheat_problem, grid)
    higher = pdesolve.solve_terminal(gheat_problem.with_shifted({"phi": 1.0}), grid)
    gaps = higher.values - base.values
    assert np.all(gaps >= 1.0 - 1e-12)  # y-independent data shifts exactly
    bump_f = pdesolve.solve_terminal(gheat_problem.with_shifted({"f": 0.1}), grid)
    assert np.all(bump_f.values >= base.values - 1e-12)


def test_divergence_reports_layer():
    # cubic growth in y blows up in finite time; the march must abort
    p = make_problem(g="y^3", bounds={"L_y": 1.0})
    grid = small_grid(p, nx=120, nt=240)
    with pytest.raises(DivergenceError) as err:
        pdesolve.solve_terminal(p, grid)
    assert err.value.layer is not None


# ---------------------------------------------------------------------------
# Obstacle solves
# ---------------------------------------------------------------------------


def test_inactive_obstacle_matches_terminal(gheat_problem, obstacle_problem):
    p = make_problem(obstacle="-1000000", bounds={"N_0": 0.0})
    grid = small_grid(p)
    proj = pdesolve.solve_obstacle_projection(p, grid)
    term = pdesolve.solve_terminal(p, grid)
    assert np.array_equal(proj.values, term.values)


def test_constant_solution_dominating_obstacle():
    p = make_problem(phi="3", obstacle="3", bounds={"M_0": 3.0, "N_0": 3.0, "m": 0})
    grid = small_grid(p)
    proj = pdesolve.solve_obstacle_projection(p, grid)
    assert np.array_equal(proj.values, np.full_like(proj.values, 3.0))


def test_early_exercise_premium(obstacle_problem):
    # discounted put-style payoff: the constraint binds deep in the money
    grid = pdesolve.build_grid(obstacle_problem, 100, 300)
    proj = pdesolve.solve_obstacle_projection(obstacle_problem, grid)
    term = pdesolve.solve_terminal(obstacle_problem, grid)
    gaps = proj.values - term.values
    assert np.all(gaps >= -1e-12)
    assert np.max(gaps) > 1e-2


def test_obstacle_dominance(obstacle_problem):
    grid = pdesolve.build_grid(obstacle_problem, 100, 300)
    proj = pdesolve.solve_obstacle_projection(obstacle_problem, grid)
    xs = grid.xs()
    for i, t in enumerate(grid.ts(obstacle_problem.T)):
        lv = np.maximum(1.0 - xs, 0.0)
        assert np.all(proj.values[i] >= lv - 1e-12)


def test_penalized_zero_level_matches_terminal(obstacle_problem):
    grid = pdesolve.build_grid(obstacle_problem, 100, 300)
    pen0 = pdesolve.solve_obstacle_penalized(obstacle_problem, grid, 0.0)
    term = pdesolve.solve_terminal(obstacle_problem, grid)
    assert np.array_equal(pen0.values, term.values)


def test_penalized_converges_to_projection(obstacle_problem):
    grid = pdesolve.build_grid(obstacle_problem, 100, 300)
    proj = pdesolve.solve_obstacle_projection(obstacle_problem, grid)
    pen = pdesolve.solve_obstacle_penalized(obstacle_problem, grid, 1024.0)
    assert np.max(np.abs(pen.values - proj.values)) < 1e-2


def test_penalized_monotone_in_level(obstacle_problem):
    grid = pdesolve.build_grid(obstacle_problem, 100, 300)
    prev = None
    # keep n dt <= 0.9 so every level shares one time discretisation
    for n in (1.0, 8.0, 64.0, 256.0):
        field = pdesolve.solve_obstacle_penalized(obstacle_problem, grid, n)
        if prev is not None:
            assert np.all(field.values >= prev - 1e-10)
        prev = field.values


def test_penalized_substeps_respect_stiff_cap(obstacle_problem):
    # n dt = 40 >> 1 must still be stable through internal substepping
    grid = pdesolve.build_grid(obstacle_problem, 100, 300)
    field = pdesolve.solve_obstacle_penalized(obstacle_problem, grid, 12000.0)
    assert np.all(np.isfinite(field.values))


def test_obstacle_requested_without_obstacle(gheat_problem):
    grid = small_grid(gheat_problem)
    with pytest.raises(Error):
        pdesolve.solve_obstacle_projection(gheat_problem, grid)


# ---------------------------------------------------------------------------
# Classical sanity and export
# ---------------------------------------------------------------------------


def test_degenerate_band_reproduces_heat_solution():
    p = make_problem(
        sigma_low=0.7, sigma_high=0.7, phi="x^2", domain=[-10.0, 10.0], bounds={"M_0": 101.0}
    )
    grid = pdesolve.build_grid(p, 160, 320)
    field = pdesolve.solve_terminal(p, grid)
    assert field.value_at_origin(0.0) == pytest.approx(0.49, abs=3e-3)


def test_csv_export_format_and_determinism(gheat_problem, tmp_path):
    grid = small_grid(gheat_problem, nx=20, nt=40)
    field = pdesolve.solve_terminal(gheat_problem, grid)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    field.write_csv(p1)
    field.write_csv(p2)
    assert p1.read_bytes() == p2.read_bytes()
    lines = p1.read_text().splitlines()
    assert lines[0] == "t,x,u"
    assert len(lines) == 1 + (grid.nt + 1) * (grid.nx + 2)
    t0, x0, u0 = lines[1].split(",")
    assert float(t0) == 0.0 and float(x0) == grid.x_lo
    # 17 significant digits round-trip exactly
    assert float(u0) == field.values[0, 0]


def test_gradient_field_of_band_heat(gheat_problem):
    grid = small_grid(gheat_problem, nx=120, nt=240)
    field = pdesolve.solve_terminal(gheat_problem, grid)
    zf = pdesolve.gradient_field(gheat_problem, field)
    xs = grid.xs()
    inner = slice(grid.nx // 4, -grid.nx // 4)
    assert np.allclose(zf.values[grid.nt // 2, inner], 2.0 * xs[inner], atol=5e-2)
