import numpy as np
import pytest
from hypothesis import given, strategies as st

from multirate.boundary import dirichlet, periodic
from multirate.fluxes import Discretization, rusanov, rusanov_flux, semidiscrete_rhs, upwind_flux
from multirate.grid import State, build_grid
from multirate.problems import buckley_leverett, burgers, bl_flux

BURGERS = burgers().flux
BL = buckley_leverett().flux

states = st.floats(-5, 5, allow_nan=False)


def test_rusanov_burgers_riemann():
    assert rusanov_flux([1.0], [0.0], BURGERS)[0] == pytest.approx(0.75, abs=1e-15)


def test_rusanov_consistency_examples():
    assert rusanov_flux([0.5], [0.5], BURGERS)[0] == 0.125
    assert rusanov_flux([0.0], [0.0], BURGERS)[0] == 0.0


@given(states)
def test_rusanov_consistency_burgers(u):
    assert rusanov_flux([u], [u], BURGERS)[0] == BURGERS([u])[0, 0]


@given(st.floats(0, 1))
def test_rusanov_consistency_buckley_leverett(u):
    assert rusanov_flux([u], [u], BL)[0] == bl_flux(u)


@given(states)
def test_rusanov_symmetry_even_flux(uL):
    uR = -uL
    alpha = abs(uL)
    expected = -alpha * (uR - uL) / 2 + 0.5 * uL**2
    assert rusanov_flux([uL], [uR], BURGERS)[0] == pytest.approx(expected, abs=1e-12)


def test_rusanov_bl_bound_covers_inflection():
    # f' peaks inside (0.2, 0.8); endpoint evaluation alone would miss it
    u = np.linspace(0, 1, 20001)
    peak = np.max(np.abs(BL.eigenvalues(u[None, :])))
    assert BL.wave_speed_bound(np.array([[0.2]]), np.array([[0.8]]))[0] >= 0.99 * peak


@pytest.mark.parametrize("a,expected", [(1.0, 2.0), (-1.0, -5.0), (0.0, 0.0)])
def test_upwind(a, expected):
    assert upwind_flux(2.0, 5.0, a) == expected


def test_constant_state_zero_tendency():
    g = build_grid(0.0, 1.0, 20)
    dudt, _ = semidiscrete_rhs(State(np.full(20, 0.3)), BURGERS, g, periodic())
    np.testing.assert_array_equal(dudt, 0.0)


def test_burgers_step_tendency():
    g = build_grid(-1.0, 1.0, 10)
    U = np.where(g.centers < 0, 1.0, 0.0)
    dudt, F = semidiscrete_rhs(State(U), BURGERS, g, dirichlet([1.0], [0.0]))
    expected = np.zeros(10)
    expected[4] = -0.25 / g.dx  # F_in = 0.5, F_out = 0.75
    expected[5] = 0.75 / g.dx
    np.testing.assert_allclose(dudt[0], expected, atol=1e-12)
    assert F.shape == (1, 11)


def test_burgers_step_interface_flux_is_the_rusanov_value():
    g = build_grid(-1.0, 1.0, 10)
    U = np.where(g.centers < 0, 1.0, 0.0)
    _, F = semidiscrete_rhs(State(U), BURGERS, g, dirichlet([1.0], [0.0]))
    assert F[0, 5] == 0.75
    # the jump only touches cells 4 and 5, each with -/+ 0.75/dx from that interface
    assert F[0, 4] == 0.5 and F[0, 6] == 0.0


@given(st.lists(st.floats(-2, 2), min_size=3, max_size=40), st.floats(-2, 2), st.floats(-2, 2))
def test_telescoping_dirichlet(vals, ul, ur):
    n = len(vals)
    g = build_grid(0.0, 1.0, n)
    disc = Discretization(g, rusanov(BURGERS), dirichlet([ul], [ur]))
    dudt, F = disc.rhs(np.array([vals]))
    assert g.dx * dudt.sum() == pytest.approx(-(F[0, -1] - F[0, 0]), abs=1e-13 * max(1.0, np.abs(F).max()))


@given(st.lists(st.floats(0, 1), min_size=3, max_size=40))
def test_telescoping_periodic(vals):
    g = build_grid(0.0, 1.0, len(vals))
    disc = Discretization(g, rusanov(BL), periodic())
    dudt, F = disc.rhs(np.array([vals]))
    assert F[0, 0] == F[0, -1]
    assert abs(g.dx * dudt.sum()) <= 1e-13


def test_periodic_links():
    g = build_grid(0.0, 1.0, 5)
    disc = Discretization(g, rusanov(BURGERS), periodic())
    assert disc.n_links == 5
    assert disc.left_cell[0] == 4 and disc.right_cell[0] == 0
