import numpy as np
import pytest
import sympy
from hypothesis import given, settings, strategies as st

from multirate.integrators import (
    GAMMA_L_STABLE,
    IntegratorConfig,
    NeighborSparsity,
    NewtonError,
    StageRecord,
    amplification_factor,
    hermite_extrapolate,
    linear_extrapolate,
    newton_solve,
    theta_step,
    trbdf2_step,
    trbdf2_weights,
)


def decay(u):
    return -u


# -- Newton --------------------------------------------------------------------


def test_newton_affine_one_iteration():
    from collections import Counter

    c = Counter()
    x = newton_solve(lambda x: x - 1.0, np.array([0.0]), counter=c)
    assert x[0] == pytest.approx(1.0, abs=1e-15)
    # the first iteration lands on the root; the second confirms a zero update
    assert c["newton_iters"] <= 2


def test_newton_square_root():
    x = newton_solve(lambda x: x**2 - 4.0, np.array([3.0]), tol=1e-12)
    assert abs(x[0] - 2.0) <= 1e-12


def test_newton_no_real_root():
    with pytest.raises(NewtonError):
        newton_solve(lambda x: x**2 + 1.0, np.array([0.0]))


def test_newton_sparse_matches_dense():
    n_cells = 9
    cells = np.arange(n_cells)
    A = np.diag(np.full(n_cells, 4.0)) + np.diag(np.ones(n_cells - 1), 1) + np.diag(np.ones(n_cells - 1), -1)
    A[0, -1] = A[-1, 0] = 1.0
    b = np.linspace(1, 2, n_cells)

    def res(x):
        return A @ x.ravel() + 0.1 * x.ravel() ** 3 - b

    dense = newton_solve(res, np.zeros(n_cells))
    sparse = newton_solve(res, np.zeros(n_cells), structure=NeighborSparsity(cells, 1, n_cells, periodic=True))
    np.testing.assert_allclose(sparse, dense, atol=1e-12)


@pytest.mark.parametrize("n_cells", [7, 8, 10, 11])
def test_sparsity_recovers_block_tridiagonal_jacobian(n_cells):
    rng = np.random.default_rng(n_cells)
    d = 2
    cells = np.arange(n_cells)
    B = [rng.normal(size=(d, d)) for _ in range(3)]

    def res(x):
        X = x.reshape(d, n_cells)
        out = np.zeros_like(X)
        for off, M in zip((-1, 0, 1), B):
            out += M @ np.roll(X, -off, axis=1)
        return out.ravel()

    sp = NeighborSparsity(cells, d, n_cells, periodic=True)
    from multirate.integrators import _fd_jacobian

    x0 = rng.normal(size=d * n_cells)
    J, _ = _fd_jacobian(res, x0, res(x0), sp)
    Jd, _ = _fd_jacobian(res, x0, res(x0), None)
    np.testing.assert_allclose(J.toarray(), Jd, atol=1e-6)


# -- theta and TR-BDF2 -----------------------------------------------------------


def test_backward_euler_decay():
    assert theta_step(decay, np.array([1.0]), 1.0, 1.0, tol=1e-14)[0] == pytest.approx(0.5, abs=1e-14)


def test_trapezoid_decay():
    assert theta_step(decay, np.array([1.0]), 1.0, 0.5, tol=1e-14)[0] == pytest.approx(1 / 3, abs=1e-14)


@given(st.floats(-5, -0.01), st.floats(0.01, 2.0))
def test_backward_euler_closed_form(lam, dt):
    u = theta_step(lambda y: lam * y, np.array([1.3]), dt, 1.0, tol=1e-14)
    assert u[0] == pytest.approx(1.3 / (1 - lam * dt), rel=1e-12)


def test_zero_rhs_is_identity():
    u0 = np.array([[1.0, -2.0, 3.0]])
    zero = lambda u: np.zeros_like(u)
    np.testing.assert_array_equal(theta_step(zero, u0, 0.3, 0.5), u0)
    # the BDF2 combination a*u_g - b*u_n has a - b = 1 only up to rounding
    np.testing.assert_allclose(trbdf2_step(zero, u0, 0.3)[0], u0, rtol=1e-15, atol=0)


def test_trbdf2_constant_rhs_exact():
    u0 = np.array([2.0])
    u1, _ = trbdf2_step(lambda u: np.full_like(u, 3.0), u0, 0.7, tol=1e-15)
    assert u1[0] == pytest.approx(2.0 + 3.0 * 0.7, abs=1e-14)


def test_trbdf2_amplification_matches_symbolic_oracle():
    z = sympy.Symbol("z")
    g = 2 - sympy.sqrt(2)
    stage = (1 + g * z / 2) / (1 - g * z / 2)
    a = 1 / (g * (2 - g))
    b = (1 - g) ** 2 / (g * (2 - g))
    c = (1 - g) / (2 - g)
    R = sympy.simplify((a * stage - b) / (1 - c * z))
    oracle = float(R.subs(z, sympy.Rational(-1, 10)))
    lam = -1.0
    u1, _ = trbdf2_step(lambda u: lam * u, np.array([1.0]), 0.1, tol=1e-15)
    assert u1[0] == pytest.approx(oracle, abs=1e-14)
    assert complex(amplification_factor(-0.1)).real == pytest.approx(oracle, abs=1e-15)


def test_trbdf2_second_order():
    errs = []
    dts = [0.1, 0.05, 0.025, 0.0125]
    for dt in dts:
        u = np.array([1.0])
        for _ in range(int(round(1 / dt))):
            u, _ = trbdf2_step(decay, u, dt, tol=1e-15)
        errs.append(abs(u[0] - np.exp(-1)))
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert abs(slope - 2.0) <= 0.2


def test_trbdf2_l_stable_probe():
    u, _ = trbdf2_step(lambda y: -1e6 * y, np.array([1.0]), 1.0, tol=1e-15)
    assert abs(u[0]) < 1e-3
    assert abs(amplification_factor(-1e12)) < 1e-3


def test_trbdf2_weights_sum_to_one():
    w = trbdf2_weights()
    assert w.sum() == pytest.approx(1.0, abs=1e-15)
    assert w[0] == w[1] == pytest.approx(np.sqrt(2) / 4)


def test_trbdf2_frozen_overlay_equals_added_constant():
    rhs = lambda u: -u**2
    base, _ = trbdf2_step(lambda u: rhs(u) + 0.3, np.array([1.0]), 0.2, tol=1e-15)
    ov = {k: np.array([0.3]) for k in ("n", "gamma", "new")}
    over, _ = trbdf2_step(rhs, np.array([1.0]), 0.2, frozen=ov, tol=1e-15)
    np.testing.assert_allclose(over, base, atol=1e-15)


def test_integrator_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(scheme="rk4")
    with pytest.raises(ValueError):
        IntegratorConfig(gamma=1.5)
    assert IntegratorConfig().order_r == 2
    assert IntegratorConfig(scheme="theta", theta=1.0).order_r == 1


# -- extrapolation ---------------------------------------------------------------


def _record_from(poly, dpoly, t_n, dt, gamma=GAMMA_L_STABLE):
    t_g = t_n + gamma * dt
    return StageRecord(
        np.array([poly(t_n)]), np.array([poly(t_g)]), np.array([0.0]),
        np.array([dpoly(t_n)]), np.array([dpoly(t_g)]), dt, gamma, t_n,
    )


def test_hermite_endpoints():
    rec = _record_from(lambda t: np.sin(t), np.cos, 0.3, 0.5)
    assert hermite_extrapolate(rec, 0.3)[0] == rec.u_n[0]
    assert hermite_extrapolate(rec, rec.t_gamma)[0] == pytest.approx(rec.u_gamma[0], abs=1e-15)


def test_hermite_constant_and_linear():
    rec = _record_from(lambda t: 4.0 + 0 * t, lambda t: 0.0, 0.0, 1.0)
    assert hermite_extrapolate(rec, 1.0)[0] == pytest.approx(4.0, abs=1e-14)
    rec = _record_from(lambda t: t, lambda t: 1.0, 0.0, 1.0)
    assert hermite_extrapolate(rec, 1.0)[0] == pytest.approx(1.0, abs=1e-14)


def test_hermite_cubic_at_one_over_gamma():
    rec = _record_from(lambda t: t**3, lambda t: 3 * t**2, 0.0, 1.0)
    # t_target = t_n + dt corresponds to beta = 1/gamma
    assert hermite_extrapolate(rec, 1.0)[0] == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=100)
@given(
    st.lists(st.floats(-3, 3), min_size=4, max_size=4),
    st.floats(-2, 2),
    st.floats(0.01, 3),
    st.floats(0, 1.5),
)
def test_hermite_reproduces_cubics(c, t_n, dt, frac):
    p = np.polynomial.Polynomial(c)
    dp = p.deriv()
    rec = _record_from(p, dp, t_n, dt)
    t = t_n + frac * dt
    scale = max(1.0, float(np.abs(p(t))), *(abs(ci) for ci in c)) * max(1.0, abs(t)) ** 3
    assert abs(hermite_extrapolate(rec, t)[0] - p(t)) <= 1e-12 * scale


def test_linear_extrapolate_exact_on_lines():
    assert linear_extrapolate(np.array([1.0]), np.array([1.5]), 0.5, 1.0, 1.0)[0] == pytest.approx(2.0)
