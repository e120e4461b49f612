import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from multirate.boundary import apply_bc, dirichlet, extrapolate, periodic
from multirate.grid import Grid1D, State, build_grid, cell_average_init, total_mass
from multirate.problems import saint_venant_dam_break


def test_build_grid_burgers_domain():
    g = build_grid(-1.0, 3.0, 400)
    assert g.dx == pytest.approx(0.01, abs=1e-15)
    assert g.centers[0] == pytest.approx(-0.995, abs=1e-14)


def test_build_grid_two_cells():
    g = build_grid(0.0, 1.0, 2)
    assert g.dx == 0.5
    np.testing.assert_allclose(g.centers, [0.25, 0.75])


def test_build_grid_dam_break_domain():
    assert build_grid(0.0, 3000.0, 300).dx == 10.0


@pytest.mark.parametrize("args", [(1.0, 0.0, 10), (0.0, 1.0, 1), (0.0, np.inf, 10), (0.0, 1.0, 2.5)])
def test_build_grid_rejects_bad_input(args):
    with pytest.raises(ValueError):
        build_grid(*args)


@given(
    st.floats(-1e3, 1e3),
    st.floats(1e-3, 1e3),
    st.integers(2, 500),
)
def test_centers_increasing_and_symmetric(a, length, n):
    g = build_grid(a, a + length, n)
    assert np.all(np.diff(g.centers) > 0)
    mid = 0.5 * (g.x_left + g.x_right)
    np.testing.assert_allclose(g.centers + g.centers[::-1], 2 * mid, atol=1e-9 * max(1.0, abs(mid), length))


def test_constant_initial_data():
    g = build_grid(0.0, 1.0, 7)
    s = cell_average_init(lambda x: np.full_like(x, 2.5), g)
    np.testing.assert_array_equal(s.values, np.full((1, 7), 2.5))


def test_sine_averages_match_antiderivative():
    g = build_grid(0.0, 2 * np.pi, 100)
    s = cell_average_init(np.sin, g, lambda x: -np.cos(x))
    xf = g.interfaces
    expected = (np.cos(xf[:-1]) - np.cos(xf[1:])) / g.dx
    np.testing.assert_allclose(s.values[0], expected, rtol=0, atol=1e-14)


def test_step_aligned_with_interface():
    g = build_grid(-1.0, 1.0, 10)
    s = cell_average_init(lambda x: np.where(x < 0, 1.0, 0.0), g)
    np.testing.assert_array_equal(s.values[0], [1.0] * 5 + [0.0] * 5)


def test_state_rejects_non_finite():
    with pytest.raises(ValueError):
        State(np.array([1.0, np.nan]))


@given(st.floats(-10, 10), st.integers(2, 200))
def test_total_mass_of_constant(c, n):
    g = build_grid(0.0, 3.0, n)
    assert total_mass(State(np.full(n, c)), g)[0] == pytest.approx(3.0 * c, abs=1e-12 * max(1.0, abs(c)))


def test_total_mass_of_sine_vanishes():
    g = build_grid(0.0, 2 * np.pi, 100)
    s = cell_average_init(np.sin, g, lambda x: -np.cos(x))
    assert abs(total_mass(s, g)[0]) < 1e-14


def test_total_mass_dam_break():
    spec = saint_venant_dam_break()
    g = spec.grid()
    h_dry = spec.params["h_dry"]
    m = total_mass(spec.initial_state(g), g)
    assert m[0] == pytest.approx(1.5 * 1500 + h_dry * 1500, rel=1e-14)
    assert m[1] == 0.0


@settings(max_examples=50)
@given(st.floats(0.1, 5.0), st.floats(-3, 3), st.integers(5, 300))
def test_total_mass_equals_exact_integral(k, phase, n):
    g = build_grid(-1.0, 2.0, n)
    f = lambda x: np.cos(k * x + phase) + 2.0
    F = lambda x: np.sin(k * x + phase) / k + 2.0 * x
    exact = F(2.0) - F(-1.0)
    m = total_mass(cell_average_init(f, g, F), g)[0]
    assert m == pytest.approx(exact, rel=1e-12)


def test_ghosts_periodic():
    left, right = apply_bc(np.arange(1.0, 27.0)[None, :], periodic())
    assert left[0] == 26.0 and right[0] == 1.0


def test_ghosts_dirichlet_and_extrapolate():
    U = np.array([[3.0, 4.0, 5.0]])
    left, right = apply_bc(U, dirichlet([1.0], [0.0]))
    assert left[0] == 1.0 and right[0] == 0.0
    left, right = apply_bc(U, extrapolate())
    assert left[0] == 3.0 and right[0] == 5.0


def test_dam_break_uses_zero_gradient_ghosts():
    assert saint_venant_dam_break().bc.kind == "extrapolate"
