from __future__ import annotations

import math

import numpy as np
import pytest

from modules.analysis import mass_bound_ok
from modules.error_codes import NUMERIC_GRID_MISMATCH, NUMERIC_STABILITY_VIOLATED
from modules.errors import ConfigError, NumericalError
from modules.model import Constant, Domain, InteractionKernel, ModelSpec, MutationKernel, Polynomial, TraitKernel
from modules.pde import DensityGrid, PdeConfig, competition_field, solve, step, trapezoid_weights

UNIT = Domain(0.0, 1.0, 0.0, 1.0)


def _spec(**changes) -> ModelSpec:
    spec = ModelSpec(
        domain=UNIT,
        lam=Constant(0.0),
        mu0=Constant(0.0),
        mu1=Constant(0.0),
        m=Constant(0.01),
        b=Polynomial("x", (0.5, -1.0)),
        mutation=MutationKernel(0.0, 0.1, 0.0, 1.0),
        interaction=InteractionKernel("indicator", 0.2, "boundary_aware"),
    )
    return spec.replace(**changes)


def _bump(nx: int = 41, nu: int = 21) -> DensityGrid:
    return DensityGrid.from_function(UNIT, lambda x, u: np.exp(-((x - 0.3) ** 2) / 0.01) * (1.0 + u), nx=nx, nu=nu)


def test_trapezoid_weights_integrate_constants() -> None:
    w = trapezoid_weights(5, 0.25)

    assert w.tolist() == [0.125, 0.25, 0.25, 0.25, 0.125]
    assert DensityGrid.from_function(UNIT, lambda x, u: 2.0 + 0 * x, nx=7, nu=9).mass() == pytest.approx(2.0)


def test_density_grid_validation() -> None:
    with pytest.raises(NumericalError):
        DensityGrid(UNIT, -np.ones((3, 3)))
    with pytest.raises(NumericalError):
        DensityGrid(UNIT, np.full((3, 3), np.nan))
    with pytest.raises(ConfigError):
        DensityGrid(UNIT, np.ones((1, 3)))
    with pytest.raises(NumericalError) as exc_info:
        DensityGrid.zeros(UNIT, 5, 5).require_same_grid(DensityGrid.zeros(UNIT, 5, 6))
    assert exc_info.value.code == NUMERIC_GRID_MISMATCH


def test_pde_config_validation() -> None:
    with pytest.raises(ConfigError):
        PdeConfig(scheme="crank_nicolson")
    with pytest.raises(ConfigError):
        PdeConfig(mode="global")
    with pytest.raises(ConfigError):
        PdeConfig(dt=0.0)
    with pytest.raises(ConfigError):
        PdeConfig(safety=1.5)


@pytest.mark.parametrize("scheme", ["explicit", "imex"])
def test_reflecting_transport_conserves_mass(scheme) -> None:
    g0 = _bump()

    solution = solve(g0, _spec(), PdeConfig(scheme=scheme), 2.0)

    final = solution.snapshots[-1]
    assert final.t == 2.0
    assert final.mass() == pytest.approx(g0.mass(), rel=1e-10)
    assert all(mass == pytest.approx(g0.mass(), rel=1e-10) for _, mass in solution.mass_trace)


def test_drift_moves_mass_towards_its_rest_point() -> None:
    g0 = _bump()

    final = solve(g0, _spec(), PdeConfig(), 3.0).snapshots[-1]

    centre = float(final.weights_x @ (final.x * final.column_mass())) / final.mass()
    assert centre == pytest.approx(0.5, abs=0.05)


def test_explicit_step_beyond_stability_bound_is_rejected() -> None:
    with pytest.raises(NumericalError) as exc_info:
        solve(_bump(), _spec(), PdeConfig(dt=0.1, scheme="explicit"), 1.0)
    assert exc_info.value.code == NUMERIC_STABILITY_VIOLATED


def test_imex_takes_steps_beyond_the_explicit_bound() -> None:
    g0 = _bump()

    solution = solve(g0, _spec(), PdeConfig(dt=0.1, scheme="imex"), 1.0)

    assert solution.dt == 0.1
    assert np.all(solution.snapshots[-1].values >= 0.0)
    assert solution.snapshots[-1].mass() == pytest.approx(g0.mass(), rel=1e-10)


def test_homogeneous_logistic_columns_follow_the_logistic_ode() -> None:
    spec = _spec(
        lam=Constant(2.0),
        mu0=Constant(1.0),
        mu1=Constant(1.0),
        m=Constant(0.0),
        b=Constant(0.0),
        competition_W=TraitKernel(),
    )
    g0 = DensityGrid.from_function(UNIT, lambda x, u: 0.1 + 0 * x, nx=11, nu=11)

    final = solve(g0, spec, PdeConfig(dt=1e-3, mode="local"), 3.0).snapshots[-1]

    growth = math.exp(3.0)
    expected = 0.1 * growth / (1.0 + 0.1 * (growth - 1.0))
    assert final.column_mass().tolist() == pytest.approx([expected] * 11, rel=1e-2)


def test_nonlocal_field_equals_local_field_for_space_homogeneous_density() -> None:
    spec = _spec(competition_W=TraitKernel(width=0.1))
    g = DensityGrid.from_function(UNIT, lambda x, u: np.exp(-u) + 0 * x, nx=31, nu=21)

    local = competition_field(g, spec, "local")
    nonlocal_ = competition_field(g, spec, "nonlocal")

    np.testing.assert_allclose(nonlocal_, local, rtol=1e-12)


def test_constant_normalization_loses_kernel_mass_at_the_walls() -> None:
    spec = _spec(interaction=InteractionKernel("indicator", 0.2, "constant"), competition_W=TraitKernel())
    g = DensityGrid.from_function(UNIT, lambda x, u: 1.0 + 0 * x, nx=41, nu=11)

    field = competition_field(g, spec, "nonlocal")

    assert field[20, 5] == pytest.approx(1.0, rel=0.1)
    assert field[0, 5] < 0.6 * field[20, 5]


def test_mutation_term_grows_mass_at_the_mutation_rate() -> None:
    spec = _spec(m=Constant(0.0), b=Constant(0.0), mutation=MutationKernel(0.5, 0.05, 0.0, 1.0))
    g0 = _bump()

    solution = solve(g0, spec, PdeConfig(dt=0.01), 1.0)

    assert solution.snapshots[-1].mass() == pytest.approx(g0.mass() * (1.0 + 0.5 * 0.01) ** 100, rel=1e-9)
    assert mass_bound_ok(solution.mass_trace, g0.mass(), 0.5)


def test_snapshots_land_on_requested_times() -> None:
    g0 = _bump()

    solution = solve(g0, _spec(), PdeConfig(), 1.0, [0.0, 0.35, 1.0])

    assert [g.t for g in solution] == [0.0, 0.35, 1.0]
    assert len(solution) == 3
    np.testing.assert_array_equal(solution[0].values, g0.values)
    assert solution.at(0.35).t == 0.35
    with pytest.raises(KeyError):
        solution.at(0.5)
    with pytest.raises(ConfigError):
        solve(g0, _spec(), PdeConfig(), 1.0, [0.0, 2.0])


def test_single_step_advances_time() -> None:
    g1 = step(_bump(), _spec(), PdeConfig(dt=0.005))

    assert g1.t == pytest.approx(0.005)


def test_grid_on_other_boxes_is_rejected() -> None:
    g = DensityGrid.zeros(Domain(0.0, 2.0, 0.0, 1.0), 11, 11)

    with pytest.raises(NumericalError) as exc_info:
        solve(g, _spec(), PdeConfig(), 1.0)
    assert exc_info.value.code == NUMERIC_GRID_MISMATCH


def test_automatic_explicit_step_keeps_a_point_mass_nonnegative() -> None:
    spec = _spec(
        lam=Constant(2.0),
        mu0=Constant(1.0),
        mu1=Constant(1.0),
        m=Constant(0.01),
        b=Constant(0.0),
        competition_W=TraitKernel(),
    )
    g0 = DensityGrid.zeros(UNIT, 101, 101)
    g0.values[50, 50] = 1.0 / (g0.weights_x[50] * g0.weights_u[50])

    solution = solve(g0, spec, PdeConfig(mode="local"), 0.2)

    transport_rate = 2.0 * 0.01 / g0.dx**2
    assert solution.dt < 0.9 / transport_rate
    assert solution.clipped_mass <= 1e-12 * g0.mass()
    assert np.all(solution.snapshots[-1].values >= 0.0)


def test_constant_normalization_is_exact_away_from_the_walls() -> None:
    # delta is a whole number of grid steps, so the window edge falls on a node
    spec = _spec(interaction=InteractionKernel("indicator", 0.025, "constant"), competition_W=TraitKernel())
    g = DensityGrid.from_function(UNIT, lambda x, u: 1.0 + 0 * x, nx=81, nu=5)

    field = competition_field(g, spec, "nonlocal")

    np.testing.assert_allclose(field[5:-5], competition_field(g, spec, "local")[5:-5], rtol=1e-12)


def test_transport_converges_under_grid_refinement() -> None:
    def final(nx: int) -> np.ndarray:
        g0 = DensityGrid.from_function(UNIT, lambda x, u: np.exp(-((x - 0.3) ** 2) / 0.01) + 0 * u, nx=nx, nu=3)
        return solve(g0, _spec(), PdeConfig(scheme="imex", dt=1e-3), 0.5).snapshots[-1].column_mass()

    reference = final(321)
    # nodes of the coarsest grid are nodes of every finer grid
    errors = [np.max(np.abs(final(nx)[:: (nx - 1) // 20] - reference[:: 16])) for nx in (21, 41, 81)]

    assert errors[0] > errors[1] > errors[2]
    assert errors[2] < 0.5 * errors[0]
