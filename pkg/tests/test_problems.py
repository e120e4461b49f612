import numpy as np
import pytest
from hypothesis import given, strategies as st

from multirate.fluxes import semidiscrete_rhs
from multirate.grid import State
from multirate.problems import (
    PROBLEMS,
    bl_flux,
    buckley_leverett,
    burgers,
    rotating_shallow_water,
    saint_venant_dam_break,
)


def test_burgers_flux_values():
    f = burgers().flux
    assert f([1.0])[0, 0] == 0.5 and f([0.0])[0, 0] == 0.0


def test_burgers_exact_shock_and_fan():
    shock = burgers(1.0, 0.0).exact_solution
    np.testing.assert_array_equal(shock(np.array([0.49, 0.51]), 1.0)[0], [1.0, 0.0])
    fan = burgers(0.0, 1.0).exact_solution
    assert fan(np.array([0.5]), 1.0)[0, 0] == 0.5


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_burgers_rankine_hugoniot(ul, ur):
    if ul <= ur:
        return
    spec = burgers(ul, ur)
    s = 0.5 * (ul + ur)
    f = spec.flux
    assert s * (ul - ur) == pytest.approx(f([ul])[0, 0] - f([ur])[0, 0], abs=1e-12)
    x = np.array([s - 1e-9, s + 1e-9])
    np.testing.assert_array_equal(spec.exact_solution(x, 1.0)[0], [ul, ur])


def test_bl_flux_values():
    assert bl_flux(0.0) == 0.0 and bl_flux(1.0) == 1.0
    assert bl_flux(0.5) == pytest.approx(0.75, abs=1e-15)


def test_bl_flux_monotone_on_unit_interval():
    u = np.linspace(0, 1, 10001)
    f = bl_flux(u)
    assert np.all(np.diff(f) >= 0)
    assert f.min() >= 0 and f.max() <= 1


@given(st.floats(0, 1))
def test_bl_flux_maps_unit_interval(u):
    assert 0.0 <= bl_flux(u) <= 1.0


def test_dam_break_eigenvalues_at_rest():
    lam = saint_venant_dam_break().flux.eigenvalues(np.array([[1.5], [0.0]]))
    np.testing.assert_allclose(lam[:, 0], [-3.8360, 3.8360], atol=5e-5)


def test_dam_break_flux_example():
    F = saint_venant_dam_break().flux(np.array([[1.0], [2.0]]))
    np.testing.assert_allclose(F[:, 0], [2.0, 8.905], rtol=1e-11)


def test_dam_break_still_water_is_steady():
    spec = saint_venant_dam_break(n_cells=30)
    g = spec.grid()
    U = np.vstack([np.full(30, 0.8), np.zeros(30)])
    dudt, _ = semidiscrete_rhs(State(U), spec.flux, g, spec.bc)
    np.testing.assert_array_equal(dudt, 0.0)


def test_dam_break_dry_velocity_vanishes():
    spec = saint_venant_dam_break()
    F = spec.flux(np.array([[0.0], [1e-3]]))
    assert np.all(np.isfinite(F)) and F[1, 0] == 0.0


def test_rotating_sw_rest_and_flat_surface():
    spec = rotating_shallow_water(n_cells=40)
    g = spec.grid()
    disc = spec.discretization(g)
    np.testing.assert_array_equal(disc(np.zeros((3, 40))), 0.0)
    U = np.zeros((3, 40))
    U[0] = 0.3
    dudt = disc(U)
    np.testing.assert_array_equal(dudt[0], 0.0)
    np.testing.assert_allclose(dudt[1, 1:-1], 0.0, atol=1e-18)


def test_rotating_sw_geostrophic_balance():
    spec = rotating_shallow_water(n_cells=40)
    g = spec.grid()
    f, grav = spec.params["f"], spec.params["g"]
    eta = np.sin(np.linspace(0, 3, 40))
    U = np.zeros((3, 40))
    U[0] = eta
    U[2, 1:-1] = -grav * (eta[2:] - eta[:-2]) / (2 * g.dx) / f
    dudt = spec.discretization(g)(U)
    np.testing.assert_allclose(dudt[1, 1:-1], 0.0, atol=1e-14)


def test_rotating_sw_without_rotation_keeps_v_zero():
    spec = rotating_shallow_water(n_cells=40, coriolis=0.0)
    g = spec.grid()
    U = spec.initial_state(g).values
    U[1] = np.linspace(-0.1, 0.1, 40)
    assert np.all(spec.discretization(g)(U)[2] == 0.0)


def test_registry_builds_every_problem():
    for name, make in PROBLEMS.items():
        spec = make()
        g = spec.grid()
        s = spec.initial_state(g)
        assert s.values.shape == (spec.n_vars, spec.n_cells)


def test_problem_shape_mismatch():
    spec = burgers()
    with pytest.raises(ValueError):
        type(spec)(name="x", n_vars=2, flux=spec.flux, bc=spec.bc, initial=[np.sin], domain=(0, 1),
                   t_end=1.0, n_cells=10)
