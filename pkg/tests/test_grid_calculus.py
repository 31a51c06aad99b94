import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from infbend.grid_calculus import (
    Grid, GridError, NonClosedFormError, OneForm2, ScalarField, d1, d1_4, d2, diff, exactness_residual,
    make_grid, make_grid3, march_integrate, partial, path_discrepancy, path_integrate,
)

coef = st.floats(-3, 3, allow_nan=False)


@given(st.lists(coef, min_size=3, max_size=3))
def test_second_order_stencils_exact_on_quadratics(c):
    x = np.linspace(-1, 2, 9)
    h = x[1] - x[0]
    f = c[0] + c[1] * x + c[2] * x**2
    assert np.allclose(d1(f, 0, h), c[1] + 2 * c[2] * x, atol=1e-10)
    assert np.allclose(d2(f, 0, h), 2 * c[2], atol=1e-8)


@given(st.lists(coef, min_size=5, max_size=5))
def test_fourth_order_stencil_exact_on_quartics(c):
    x = np.linspace(-1, 1, 11)
    h = x[1] - x[0]
    f = sum(ck * x**k for k, ck in enumerate(c))
    df = sum(k * ck * x ** (k - 1) for k, ck in enumerate(c) if k)
    assert np.allclose(d1_4(f, 0, h), df, atol=1e-9)


@pytest.mark.parametrize("op,order", [(d1, 2), (d1_4, 4)])
def test_first_derivative_convergence_order(op, order):
    errs = []
    for n in (33, 65):
        x = np.linspace(0, 1, n)
        errs.append(np.max(np.abs(op(np.sin(3 * x), 0, x[1] - x[0]) - 3 * np.cos(3 * x))))
    assert np.log2(errs[0] / errs[1]) == pytest.approx(order, abs=0.35)


def test_grid_rejects_degenerate_input():
    with pytest.raises(GridError):
        make_grid((0, 1), (0, 1), 4, 9)
    with pytest.raises(GridError):
        make_grid((1, 0), (0, 1), 9, 9)
    with pytest.raises(GridError):
        Grid(((0, 1),), (9,))


def test_grid_spacing_and_mesh():
    g = make_grid3((0, 1), (0, 2), (-1, 1), 5, 9, 17)
    assert g.spacing == pytest.approx((0.25, 0.25, 0.125))
    assert g.h == pytest.approx(0.25)
    U, V, S = g.mesh()
    assert U.shape == (5, 9, 17) and V[0, -1, 0] == 2 and S[0, 0, 0] == -1


def test_partial_and_diff_on_polynomial():
    g = make_grid((0, 1), (0, 1), 9, 9)
    U, V = g.mesh()
    f = ScalarField(g, U**2 * V + V**2)
    assert np.allclose(diff(f, "u").values, 2 * U * V)
    assert np.allclose(diff(f, "v", 2).values, 2)
    assert np.allclose(diff(f, "uv").values, 2 * U)
    assert np.allclose(partial(f.values, g, "vv"), 2)


def _exact_form(g):
    U, V = g.mesh()
    return OneForm2(ScalarField(g, 2 * U * V), ScalarField(g, U**2)), U**2 * V


def test_path_integrate_recovers_potential():
    # trapezoid is exact here: each component is linear along its own direction
    g = make_grid((-1, 1), (0, 2), 17, 13)
    omega, pot = _exact_form(g)
    assert exactness_residual(omega).sup() < 1e-10
    phi = path_integrate(omega, base=(3, 4))
    assert np.allclose(phi.values, pot - pot[3, 4], atol=1e-12)
    assert path_discrepancy(omega) < 1e-12


def test_path_integrate_rejects_rotation_form():
    g = make_grid((-1, 1), (-1, 1), 17, 17)
    U, V = g.mesh()
    omega = OneForm2(ScalarField(g, -V), ScalarField(g, U))
    assert exactness_residual(omega).sup() == pytest.approx(2.0)
    with pytest.raises(NonClosedFormError):
        path_integrate(omega)
    assert path_discrepancy(omega) > 1.0


@settings(max_examples=20, deadline=None)
@given(st.tuples(st.integers(0, 6), st.integers(0, 8), st.integers(0, 4)))
def test_march_integrate_path_independent_for_gradients(base):
    g = make_grid3((0, 1), (-1, 1), (0, 0.5), 7, 9, 5)
    U, V, S = g.mesh()
    f = U * V * S + 2 * U - S
    derivs = [V * S + 2, U * S, U * V - 1]
    ref = f - f[base]
    for order in ("uvs", "vus", "suv"):
        assert np.allclose(march_integrate(derivs, g, base, order), ref, atol=1e-12)
