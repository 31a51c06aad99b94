import numpy as np
import pytest
import sympy as sp

from infbend.grid_calculus import VecField, make_grid
from infbend.surface_geometry import (
    NoSolutionError, NotImmersedError, NotSphericalError, build_jet, christoffel_symbols, christoffels,
    conjugate_residual, reduced_potential, solve_mu,
)

u, v = sp.symbols("u v")


def _sym_jet(expr, grid):
    """Exact samples and derivatives of a sympy parametrization."""
    U, V = grid.mesh()
    keys = {"u": (u,), "v": (v,), "uu": (u, u), "uv": (u, v), "vv": (v, v)}
    out = {}
    for k, var in keys.items():
        f = sp.lambdify((u, v), [sp.diff(c, *var) for c in expr])
        out[k] = np.stack([np.broadcast_to(np.asarray(x, float), U.shape) for x in f(U, V)], -1)
    f0 = sp.lambdify((u, v), list(expr))
    h = np.stack([np.broadcast_to(np.asarray(x, float), U.shape) for x in f0(U, V)], -1)
    return VecField(grid, h), out


def _sym_christoffel(expr):
    X = sp.Matrix(expr)
    J = X.jacobian([u, v])
    G = sp.simplify(J.T * J)
    Ginv = G.inv()
    coords = (u, v)
    return [[[sp.simplify(sum(Ginv[k, l] * (sp.diff(G[l, i], coords[j]) + sp.diff(G[l, j], coords[i])
                                           - sp.diff(G[i, j], coords[l])) / 2 for l in range(2)))
              for j in range(2)] for i in range(2)] for k in range(2)]


SPHERE = (sp.cos(u) * sp.cos(v), sp.sin(u) * sp.cos(v), sp.sin(v), 0)
CLIFFORD = tuple(x / sp.sqrt(2) for x in (sp.cos(u), sp.sin(u), sp.cos(v), sp.sin(v)))


@pytest.mark.parametrize("expr", [SPHERE, CLIFFORD], ids=["sphere", "clifford"])
def test_christoffel_symbols_match_symbolic(expr):
    g = make_grid((-0.5, 0.5), (-0.6, 0.6), 9, 11)
    h, d = _sym_jet(expr, g)
    Gam = christoffel_symbols(build_jet(h, d))
    sym = _sym_christoffel(expr)
    U, V = g.mesh()
    for k in range(2):
        for i in range(2):
            for j in range(2):
                ref = np.broadcast_to(np.asarray(sp.lambdify((u, v), sym[k][i][j])(U, V), float), U.shape)
                assert np.allclose(Gam[..., k, i, j], ref, atol=1e-12)


def test_finite_difference_jet_is_second_order():
    errs = []
    for n in (17, 33):
        g = make_grid((-0.5, 0.5), (-0.6, 0.6), n, n)
        h, d = _sym_jet(SPHERE, g)
        exact = christoffel_symbols(build_jet(h, d))
        approx = christoffel_symbols(build_jet(h))
        errs.append(np.max(np.abs(approx - exact)[2:-2, 2:-2]))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.25)


def test_jet_validation():
    g = make_grid((-0.5, 0.5), (-0.5, 0.5), 9, 9)
    h, d = _sym_jet(SPHERE, g)
    with pytest.raises(NotSphericalError):
        build_jet(VecField(g, 2 * h.values))
    flat = {k: 0 * x for k, x in d.items()}
    with pytest.raises(NotImmersedError):
        build_jet(h, flat)


def test_lat_long_sphere_integrating_factor():
    # totally geodesic S^2 in S^3: conjugate, Gamma1 = -tan v, Gamma2 = 0, so mu = c cos^2 v0 / cos^2 v
    g = make_grid((-0.5, 0.5), (-0.6, 0.6), 33, 33)
    jet = build_jet(*_sym_jet(SPHERE, g), kind="real")
    cd = christoffels(jet, "real")
    assert conjugate_residual(jet, "real").sup() < 1e-12
    U, V = g.mesh()
    assert np.allclose(cd.Gamma1.values, -np.tan(V), atol=1e-12)
    assert np.allclose(cd.Gamma2.values, 0, atol=1e-12)
    mu = solve_mu(jet, cd, c=2.0, base=(0, 0))
    ref = 2.0 * np.cos(V[0, 0]) ** 2 / np.cos(V) ** 2
    assert np.max(np.abs(mu.values - ref)) < 1e-3
    red = reduced_potential(jet, cd, mu)
    assert np.max(np.abs(red.M.values[2:-2, 2:-2])) < 5e-3
    assert red.form_residual.sup(interior=True) < 5e-2


def test_clifford_torus_has_constant_factor_and_zero_potential():
    g = make_grid((-0.5, 0.5), (-0.5, 0.5), 17, 17)
    jet = build_jet(*_sym_jet(CLIFFORD, g), kind="real")
    cd = christoffels(jet, "real")
    mu = solve_mu(jet, cd, c=1.0)
    assert np.allclose(mu.values, 1.0)
    red = reduced_potential(jet, cd, mu)
    assert np.allclose(red.M.values, 0, atol=1e-12)


def test_complex_conjugate_residual_for_clifford_is_zero():
    # h_uu + h_vv = -h is normal-free against span{h, h_u, h_v}
    g = make_grid((-0.5, 0.5), (-0.5, 0.5), 9, 9)
    jet = build_jet(*_sym_jet(CLIFFORD, g))
    assert conjugate_residual(jet, "complex").sup() < 1e-12


def test_non_integrable_factor_raises():
    # a non-conjugate net with a curl in (Gamma2, Gamma1)
    g = make_grid((0.2, 0.9), (0.1, 0.8), 21, 21)
    expr = (sp.cos(u) * sp.cos(v), sp.sin(u) * sp.cos(v), sp.sin(v) * sp.cos(u * v), sp.sin(v) * sp.sin(u * v))
    expr = tuple(c / sp.sqrt(sum(x**2 for x in expr)) for c in expr)
    jet = build_jet(*_sym_jet(expr, g))
    cd = christoffels(jet, "real")
    with pytest.raises(NoSolutionError):
        solve_mu(jet, cd)
    with pytest.raises(ValueError):
        solve_mu(jet, cd, c=-1.0)
