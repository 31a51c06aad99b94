import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import j0

from infbend.examples import clifford_family, elliptic_family
from infbend.grid_calculus import ScalarField, make_grid
from infbend.pde_solvers import (
    GoursatProblem, NotAnImmersionError, OriginCrossingError, ResonanceError, bessel_series,
    build_phi_family, dirichlet_eigenvalues, pde_residual, solve_elliptic, solve_goursat, validate_family,
)


def _zero_M(n=17, box=((0, 1), (0, 1))):
    g = make_grid(*box, n, n)
    return ScalarField(g, np.zeros(g.shape))


@settings(max_examples=25, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_goursat_free_equation_is_sum_of_edge_data(a, b, c):
    M = _zero_M()
    U, V = M.grid.mesh()
    exact = np.sin(a * U) + np.cos(b * V) + c * U**2
    sol = solve_goursat(GoursatProblem(M, exact[:, 0], exact[0, :]))
    assert np.allclose(sol.values, exact, atol=1e-12)


def test_goursat_rejects_incompatible_corner():
    M = _zero_M()
    with pytest.raises(ValueError, match="corner"):
        GoursatProblem(M, np.ones(17), np.zeros(17))


@pytest.mark.parametrize("x", [0.0, 0.3, 1.0, 2.5])
def test_bessel_series_matches_j0(x):
    assert bessel_series(x) == pytest.approx(j0(2 * np.sqrt(x)), abs=1e-12)


def test_goursat_unit_potential_converges_to_series():
    errs = []
    for n in (33, 65):
        g = make_grid((0, 1), (0, 1), n, n)
        sol = solve_goursat(GoursatProblem(ScalarField(g, np.ones(g.shape)), np.ones(n), np.ones(n)))
        assert sol.values[-1, -1] == pytest.approx(j0(2.0), abs=1e-2)
        errs.append(abs(sol.values[-1, -1] - bessel_series(1.0)))
    assert 3.2 <= errs[0] / errs[1] <= 4.8


def test_elliptic_reproduces_harmonic_quadratic():
    M = _zero_M(21, ((-1, 1), (-0.5, 0.5)))
    U, V = M.grid.mesh()
    exact = U**2 - V**2 + 3 * U * V
    assert np.allclose(solve_elliptic(M, exact).values, exact, atol=1e-11)


def test_elliptic_helmholtz_second_order():
    # e^{au} cos(bv) solves phi_uu + phi_vv + phi = 0 when b^2 = a^2 + 1
    errs = []
    for n in (17, 33):
        g = make_grid((0, 1), (0, 1), n, n)
        M = ScalarField(g, np.full(g.shape, 0.25))
        U, V = g.mesh()
        exact = np.exp(0.5 * U) * np.cos(np.sqrt(1.25) * V)
        errs.append(np.max(np.abs(solve_elliptic(M, exact).values - exact)))
    assert errs[1] < 1e-4
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.2)


def test_elliptic_resonance_detected():
    g = make_grid((0, 1), (0, 1), 17, 17)
    lam = dirichlet_eigenvalues(g, 1)[0]
    M = ScalarField(g, np.full(g.shape, lam / 4))
    with pytest.raises(ResonanceError):
        solve_elliptic(M, np.zeros(g.shape))


def test_dirichlet_eigenvalue_approaches_continuum():
    g = make_grid((0, 1), (0, 1), 129, 129)
    assert dirichlet_eigenvalues(g, 1)[0] == pytest.approx(2 * np.pi**2, rel=1e-4)


def test_clifford_seeds_give_constant_norm():
    M = _zero_M(33, ((-0.5, 0.5), (-0.5, 0.5)))
    U, V = M.grid.mesh()
    fns = [U**2 + V**2, np.cos(U), np.sin(U), np.cos(V), np.sin(V)]
    fam = build_phi_family(M, "real", [(f[:, 0], f[0, :]) for f in fns])
    assert np.allclose(np.sum(fam.phi.values**2, -1), 1.0 + 1.0, atol=1e-12)
    assert fam.residual_sup() < 1e-10


def test_analytic_families_solve_their_equations():
    g = make_grid((-0.5, 0.5), (-0.5, 0.5), 33, 33)
    for fam in (clifford_family(g), elliptic_family(g)):
        st_ = fam.stacked()
        res = max(pde_residual(st_[..., c], fam.M, fam.kind).sup() for c in range(st_.shape[-1]))
        assert res < g.h**2


def test_family_validation_errors():
    M = _zero_M()
    U, V = M.grid.mesh()
    flat = [(f[:, 0], f[0, :]) for f in (U, np.ones_like(U), U, U, U)]
    with pytest.raises(NotAnImmersionError):
        build_phi_family(M, "real", flat)
    through_origin = [(f[:, 0], f[0, :]) for f in (U, U, V, U + V, U - V)]
    with pytest.raises(OriginCrossingError):
        build_phi_family(M, "real", through_origin)
    with pytest.raises(ValueError, match="n\\+2"):
        build_phi_family(M, "real", flat[:3])
    g = make_grid((-0.5, 0.5), (-0.5, 0.5), 17, 17)
    validate_family(clifford_family(g))
